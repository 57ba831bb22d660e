//! Parameter sweeps over `(α, dx)` and their tabulation.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descent::{run, DescentConfig, IterationRecord, Termination};
use crate::error::{Error, Result};
use crate::fixtures::{fixture_single_max, fixture_two_layer, Fixture, NetKind};
use crate::grid::{norm_l2, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    SingleMax,
    TwoLayerMono,
    TwoLayerNonmono,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::SingleMax, Example::TwoLayerMono, Example::TwoLayerNonmono];

    pub fn name(self) -> &'static str {
        match self {
            Example::SingleMax => "single-max",
            Example::TwoLayerMono => "two-layer-mono",
            Example::TwoLayerNonmono => "two-layer-nonmono",
        }
    }

    pub fn fixture(self, dx: f64, alpha: f64) -> Result<Fixture> {
        match self {
            Example::SingleMax => fixture_single_max(dx, alpha),
            Example::TwoLayerMono => fixture_two_layer(NetKind::Monotone, dx, alpha),
            Example::TwoLayerNonmono => fixture_two_layer(NetKind::Nonmonotone, dx, alpha),
        }
    }

    /// Armijo parameter used for this example in the reference experiments.
    pub fn default_nu(self) -> f64 {
        match self {
            Example::SingleMax => 0.9,
            _ => 0.7,
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Example::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::Parse(format!("unknown example '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Md,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "md" => Ok(OutputFormat::Md),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Parse(format!("unknown format '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub dx: f64,
    pub cost: f64,
    pub rel_err_u: Option<f64>,
    pub rel_err_y: Option<f64>,
    pub iterations: usize,
    pub cpu_seconds: f64,
    pub final_h_norm: f64,
    pub termination: Option<Termination>,
    pub converged: bool,
    /// Set when the cell could not be run at all.
    pub failure: Option<String>,
    pub records: Vec<IterationRecord>,
}

impl SweepCell {
    fn failed(alpha: f64, dx: f64, msg: String) -> Self {
        Self {
            alpha,
            dx,
            cost: f64::NAN,
            rel_err_u: None,
            rel_err_y: None,
            iterations: 0,
            cpu_seconds: 0.0,
            final_h_norm: f64::NAN,
            termination: None,
            converged: false,
            failure: Some(msg),
            records: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub example: Example,
    pub nu: f64,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.converged)
    }

    pub fn cell(&self, alpha: f64, dx: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.alpha == alpha && c.dx == dx)
    }
}

fn rel_err(grid: &Grid, approx: &Field, exact: &Field) -> Result<f64> {
    Ok(norm_l2(grid, &approx.sub(exact))? / norm_l2(grid, exact)?)
}

/// Runs one `(α, dx)` cell; failures are recorded in the cell.
pub fn run_cell(example: Example, alpha: f64, dx: f64, cfg: &DescentConfig) -> SweepCell {
    let attempt = || -> Result<SweepCell> {
        let fx = example.fixture(dx, alpha)?;
        let report = run(&fx.problem, cfg)?;
        let grid = &fx.problem.grid;
        let rel_err_u = fx.u_exact.as_ref().map(|u| rel_err(grid, &report.u, u)).transpose()?;
        let rel_err_y = fx.y_exact.as_ref().map(|y| rel_err(grid, &report.y, y)).transpose()?;
        Ok(SweepCell {
            alpha,
            dx,
            cost: report.cost,
            rel_err_u,
            rel_err_y,
            iterations: report.iterations(),
            cpu_seconds: report.cpu_seconds,
            final_h_norm: report.final_h_norm,
            termination: Some(report.termination),
            converged: report.converged,
            failure: report.message,
            records: report.records,
        })
    };
    attempt().unwrap_or_else(|e| {
        log::warn!("{example} alpha={alpha:e} dx={dx}: {e}");
        SweepCell::failed(alpha, dx, e.to_string())
    })
}

/// Runs every `(α, dx)` combination, `α` outermost.
pub fn run_sweep(example: Example, alphas: &[f64], dxs: &[f64], cfg: &DescentConfig) -> SweepResult {
    let mut cells = Vec::with_capacity(alphas.len() * dxs.len());
    for &alpha in alphas {
        for &dx in dxs {
            log::info!("{example}: alpha = {alpha:e}, dx = {}", mesh_label(dx));
            cells.push(run_cell(example, alpha, dx, cfg));
        }
    }
    SweepResult { example, nu: cfg.nu, cells }
}

/// Least-squares slope of `log(err)` against `log(dx)`.
pub fn convergence_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::TooFewLevels { needed: 3, got: points.len() });
    }
    if points.iter().any(|&(dx, e)| !(dx > 0.0 && e > 0.0)) {
        return Err(Error::InvalidConfig("mesh sizes and errors must be positive".into()));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(dx, e)| (dx.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("mesh sizes must differ".into()));
    }
    Ok(sxy / sxx)
}

fn mesh_label(dx: f64) -> String {
    let inv = 1.0 / dx;
    if (inv - inv.round()).abs() < 1e-9 {
        format!("dx=1/{}", inv.round())
    } else {
        format!("dx={dx}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub const CSV_HEADER: &str =
    "example,alpha,dx,cost,rel_err_u,rel_err_y,iterations,cpu_seconds,final_h_norm,termination,converged";

fn termination_name(t: Option<Termination>) -> String {
    match t {
        Some(t) => serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        None => "failed".into(),
    }
}

/// Renders the sweep table as a string.
pub fn render(result: &SweepResult, format: OutputFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        OutputFormat::Json => out = serde_json::to_string_pretty(result)?,
        OutputFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for c in &result.cells {
                out.push_str(&format!(
                    "{},{:e},{:e},{:e},{},{},{},{:e},{:e},{},{}\n",
                    result.example,
                    c.alpha,
                    c.dx,
                    c.cost,
                    opt(c.rel_err_u),
                    opt(c.rel_err_y),
                    c.iterations,
                    c.cpu_seconds,
                    c.final_h_norm,
                    termination_name(c.termination),
                    c.converged
                ));
            }
        }
        OutputFormat::Md => {
            let errors = result.example == Example::SingleMax;
            let header = if errors {
                "| Mesh size | Cost | ‖u−u_h‖/‖u‖ | ‖y−y_h‖/‖y‖ | ‖h‖ | Iterates | CPU time |\n|---|---|---|---|---|---|---|\n"
            } else {
                "| Mesh size | Cost | ‖h‖ | Iterates | CPU time |\n|---|---|---|---|---|\n"
            };
            out.push_str(&format!("## {}\n\n", result.example));
            if result.cells.is_empty() {
                out.push_str(header);
            }
            let mut alpha = None;
            for c in &result.cells {
                if alpha != Some(c.alpha) {
                    if alpha.is_some() {
                        out.push('\n');
                    }
                    alpha = Some(c.alpha);
                    out.push_str(&format!("α = {:e}, ν = {}\n\n{header}", c.alpha, result.nu));
                }
                let errs = if errors {
                    format!(
                        " {} | {} |",
                        c.rel_err_u.map(|v| format!("{v:.4}")).unwrap_or_default(),
                        c.rel_err_y.map(|v| format!("{v:.4}")).unwrap_or_default()
                    )
                } else {
                    String::new()
                };
                let mark = if c.converged { "" } else { " (not converged)" };
                out.push_str(&format!(
                    "| {} | {:.5e} |{} {:.1e} | {}{} | {:.1} s |\n",
                    mesh_label(c.dx),
                    c.cost,
                    errs,
                    c.final_h_norm,
                    c.iterations,
                    mark,
                    c.cpu_seconds
                ));
            }
        }
    }
    Ok(out)
}

/// Writes the sweep table to `path`.
pub fn emit(result: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render(result, format)?.as_bytes())?;
    w.flush()?;
    Ok(())
}
