use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use reluocp::{render, run_sweep, DescentConfig, Example, OutputFormat};

#[derive(Parser)]
#[command(name = "relu-ocp", version, about = "Optimal control of PDEs with ReLU network nonlinearities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark problem on a grid of (alpha, dx) cells and tabulate the results.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    SingleMax,
    TwoLayerMono,
    TwoLayerNonmono,
}

impl From<ExampleArg> for Example {
    fn from(e: ExampleArg) -> Self {
        match e {
            ExampleArg::SingleMax => Example::SingleMax,
            ExampleArg::TwoLayerMono => Example::TwoLayerMono,
            ExampleArg::TwoLayerNonmono => Example::TwoLayerNonmono,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Md,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Md => OutputFormat::Md,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    example: ExampleArg,
    /// Control costs, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    /// Mesh sizes such as `1/32` or `0.03125`, comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_dx)]
    dx: Vec<f64>,
    /// Armijo parameter; defaults to the value used for the chosen example.
    #[arg(long)]
    nu: Option<f64>,
    /// Output file; the table goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, default_value_t = 200)]
    max_outer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_dx(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("mesh size must be positive, got {s}"))
    }
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let example = Example::from(args.example);
    let cfg = DescentConfig {
        nu: args.nu.unwrap_or_else(|| example.default_nu()),
        max_outer: args.max_outer,
        seed: args.seed,
        ..DescentConfig::default()
    };
    cfg.validate()?;
    if args.alpha.iter().any(|a| a.is_nan() || *a <= 0.0) {
        bail!("alpha values must be positive");
    }
    let result = run_sweep(example, &args.alpha, &args.dx, &cfg);
    let table = render(&result, args.format.into())?;
    match &args.out {
        Some(path) => std::fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    for cell in result.cells.iter().filter(|c| !c.converged) {
        log::warn!(
            "alpha = {:e}, dx = {}: not converged ({})",
            cell.alpha,
            cell.dx,
            cell.failure.as_deref().unwrap_or("see termination column")
        );
    }
    Ok(result.all_converged())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELU_OCP_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
