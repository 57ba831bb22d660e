//! The outer descent method for
//! `min ½‖S(u) - g‖² + (α/2)‖u‖²  s.t.  u ∈ [u_a, u_b]`, where `y = S(u)`
//! solves `-Δy + 𝒩(y) = u + f`.
//!
//! Each iteration computes a step from a regularized quadratic subproblem,
//! certifies it with the exact nonsmooth directional derivative, and
//! globalizes with an Armijo search on the merit `𝒥 + κΨ`. If the search
//! collapses, a few iterations on the smoothed problem (network with
//! smoothed activations) move the iterate away from the troublesome kink.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner, norm_l2, Field, Grid};
use crate::model::{NetModel, Nonlinearity, SmoothedNetModel};
use crate::net::ReluNet;
use crate::smoothing::{SmoothingFamily, SmoothingKind};
use crate::state::{solve_state, solve_with_fallback, NewtonConfig, StateSolution};
use crate::subproblem::{
    default_lambda, pdas_linear, sensitivity, solve_kkt_sub, BoxBounds, QuadraticModel, SubproblemConfig,
    SubproblemData, SubproblemSolution,
};

/// Differences below this many ulps of the operands are treated as noise.
const ROUNDOFF_ULPS: f64 = 64.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub eta: f64,
    pub tau_min: f64,
    pub tau0: f64,
    pub eps0: f64,
    pub delta0: f64,
    /// Backtracking factor.
    pub c: f64,
    /// Shrink factor for `ε`.
    pub c1: f64,
    /// Shrink factor for `δ`.
    pub c2: f64,
    pub tilde_c: f64,
    pub nu: f64,
    pub kappa: f64,
    /// Kept for completeness; no step of the method reads it.
    pub beta: f64,
    pub h_stop: f64,
    pub max_outer: usize,
    /// Nodes whose state lies within this distance of a kink count as nonsmooth.
    pub ns_tol: f64,
    pub max_eps_shrinks: usize,
    pub robust_budget: usize,
    /// PDAS parameter; `None` picks it from `α`.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub newton: NewtonConfig,
    pub subproblem: SubproblemConfig,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            eta: 1e-16,
            tau_min: 1e-16,
            tau0: 1.0,
            eps0: 0.1,
            delta0: 0.1,
            c: 0.6,
            c1: 0.1,
            c2: 0.1,
            tilde_c: 0.5,
            nu: 0.7,
            kappa: 1.0,
            beta: 1.1,
            h_stop: 1e-16,
            max_outer: 200,
            ns_tol: 1e-10,
            max_eps_shrinks: 30,
            robust_budget: 20,
            lambda: None,
            seed: 0,
            newton: NewtonConfig::default(),
            subproblem: SubproblemConfig::default(),
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [("c", self.c), ("c1", self.c1), ("c2", self.c2), ("tilde_c", self.tilde_c), ("nu", self.nu)];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let positive = [
            ("eta", self.eta),
            ("tau_min", self.tau_min),
            ("eps0", self.eps0),
            ("delta0", self.delta0),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau0 > 0.0 && self.tau0 <= 1.0) {
            return Err(Error::InvalidConfig(format!("tau0 must lie in (0, 1], got {}", self.tau0)));
        }
        if !(self.h_stop >= 0.0 && self.ns_tol >= 0.0) {
            return Err(Error::InvalidConfig("h_stop and ns_tol must be nonnegative".into()));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// An optimal control problem with a network nonlinearity.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub net: ReluNet,
    /// Fixed source added to the control.
    pub f: Field,
    pub g: Field,
    pub alpha: f64,
    pub bounds: BoxBounds,
    pub u_init: Field,
}

impl Problem {
    pub fn new(
        grid: Grid,
        net: ReluNet,
        f: Field,
        g: Field,
        alpha: f64,
        bounds: BoxBounds,
        u_init: Field,
    ) -> Result<Self> {
        for field in [&f, &g, &bounds.ua, &bounds.ub, &u_init] {
            grid.check(field)?;
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        if !bounds.contains(&u_init, 0.0) {
            return Err(Error::InvalidConfig("initial control violates the bounds".into()));
        }
        NetModel::new(net.clone())?;
        Ok(Self { grid, net, f, g, alpha, bounds, u_init })
    }

    pub fn model(&self) -> NetModel {
        NetModel::new(self.net.clone()).expect("validated in Problem::new")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `‖h‖ ≤ h_stop`.
    HStop,
    /// Step and directional derivative are at the level of rounding errors.
    RoundoffFloor,
    /// No descent direction was found even after shrinking `ε`.
    ApproxStationary,
    MaxOuter,
    /// The line search collapsed where no fallback was available.
    LineSearchFailure,
    /// A state or subproblem solve broke down.
    SolverFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `𝒥` after the step.
    pub cost: f64,
    /// Merit value after the step.
    pub merit: f64,
    pub h_norm: f64,
    pub tau: f64,
    pub dderiv: f64,
    pub eps: f64,
    pub delta: f64,
    pub robustified: bool,
    pub nonsmooth_fraction: f64,
    pub eps_shrinks: usize,
    /// The sufficient-decrease test used the quadratic model because cost
    /// differences were below rounding level.
    pub model_step: bool,
    pub kkt_residual: f64,
    pub cpu_seconds: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,cost,merit,h_norm,tau,dderiv,eps,delta,robustified,\
nonsmooth_fraction,eps_shrinks,model_step,kkt_residual,cpu_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{},{},{:e},{:e}",
            self.iter,
            self.cost,
            self.merit,
            self.h_norm,
            self.tau,
            self.dderiv,
            self.eps,
            self.delta,
            self.robustified,
            self.nonsmooth_fraction,
            self.eps_shrinks,
            self.model_step,
            self.kkt_residual,
            self.cpu_seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub u: Field,
    pub y: Field,
    pub p: Field,
    pub cost: f64,
    pub initial_cost: f64,
    pub final_h_norm: f64,
    pub termination: Termination,
    /// Termination was regular, or the iteration cap was hit while `‖h‖` was
    /// still decaying and had dropped by six orders of magnitude.
    pub converged: bool,
    pub robustifications: usize,
    pub message: Option<String>,
    pub cpu_seconds: f64,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", IterationRecord::CSV_HEADER)?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    /// Median `‖h‖` of the last quarter of the run lies below that of the first quarter.
    pub fn h_decays(&self) -> bool {
        let h: Vec<f64> = self.records.iter().map(|r| r.h_norm).collect();
        if h.len() < 4 {
            return true;
        }
        let q = h.len() / 4;
        median(&h[h.len() - q..]) < median(&h[..q])
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn roundoff(scale: f64) -> f64 {
    ROUNDOFF_ULPS * f64::EPSILON * scale
}

/// `𝒥(u)` together with the state.
pub fn reduced_objective(problem: &Problem, u: &Field) -> Result<(f64, Field)> {
    let (model, cfg) = (problem.model(), DescentConfig::default());
    let ctx = Ctx::new(problem, &model, &cfg);
    let s = ctx.state(u, None)?;
    Ok((ctx.cost(u, &s.y)?, s.y))
}

/// `𝒥'(u; h) = ⟨y - g, z⟩ + α⟨u, h⟩` with `-Δz + 𝒩'(y; z) = h`.
pub fn reduced_dderiv(problem: &Problem, u: &Field, y: &Field, h: &Field) -> Result<f64> {
    let (model, cfg) = (problem.model(), DescentConfig::default());
    let ctx = Ctx::new(problem, &model, &cfg);
    Ok(ctx.dderiv(u, y, h)?.value)
}

/// Fraction of nodes where the state is within `ns_tol` of a kink of the nonlinearity.
pub fn nonsmooth_fraction(grid: &Grid, model: &dyn Nonlinearity, y: &Field, ns_tol: f64) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let hits = (0..y.len()).filter(|&k| model.kink_distance(grid.point(k), y.values[k]) <= ns_tol).count();
    hits as f64 / y.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmijoResult {
    pub tau: f64,
    pub accepted: bool,
    pub trials: usize,
    pub model_step: bool,
}

/// Backtracking on `E(τ) ≤ E(0) + ν τ 𝒥'(u; h)` with `τ = τ₀ cⁱ`, stopping once
/// `τ` falls below `η = min(τ_min, c̃ ‖h‖)`.
///
/// `merit(τ)` returns `None` when the trial point cannot be evaluated, which
/// counts as a rejection. When `curvature` is given and the expected decrease
/// is below the rounding level of the merit values, `τ` is accepted as soon as
/// the model `τ 𝒥' + ½ τ² q` predicts a decrease.
pub fn armijo(
    mut merit: impl FnMut(f64) -> Option<f64>,
    e0: f64,
    dj: f64,
    h_norm: f64,
    curvature: Option<f64>,
    cfg: &DescentConfig,
) -> ArmijoResult {
    let eta = cfg.tau_min.min(cfg.tilde_c * h_norm);
    let mut tau = cfg.tau0;
    let mut trials = 0;
    loop {
        trials += 1;
        if let Some(e) = merit(tau) {
            let target = cfg.nu * tau * dj;
            match curvature {
                Some(q) if target.abs() <= roundoff(e0.abs() + e.abs()) => {
                    if tau * dj + 0.5 * tau * tau * q < 0.0 {
                        return ArmijoResult { tau, accepted: true, trials, model_step: true };
                    }
                }
                _ if e - e0 <= target => return ArmijoResult { tau, accepted: true, trials, model_step: false },
                _ => {}
            }
        }
        if tau <= eta || !(tau > 0.0) {
            return ArmijoResult { tau, accepted: false, trials, model_step: false };
        }
        tau *= cfg.c;
    }
}

/// A few descent iterations on the problem with the smoothed network `𝒩_δ`.
pub fn robustify(problem: &Problem, u: &Field, delta: f64, budget: usize, cfg: &DescentConfig) -> Result<Field> {
    if budget == 0 {
        return Ok(u.clone());
    }
    let fam = SmoothingFamily::new(SmoothingKind::PiecewisePolynomial, delta)?;
    let model = SmoothedNetModel::new(problem.net.clone(), fam)?;
    let ctx = Ctx::new(problem, &model, cfg);
    let out = ctx.descend(u.clone(), budget, false, &mut |_| {})?;
    Ok(out.u)
}

/// Smallest `𝒥'(u; h)` over unit feasible directions: `n_dirs` random fields
/// projected onto the tangent cone, plus the projected steepest descent direction.
pub fn b_stationarity_residual(problem: &Problem, u: &Field, y: &Field, n_dirs: usize, seed: u64) -> Result<f64> {
    let grid = &problem.grid;
    let model = problem.model();
    let cfg = DescentConfig::default();
    let ctx = Ctx::new(problem, &model, &cfg);
    let tol = 1e-12;
    let project = |h: &Field| -> Field {
        Field {
            values: (0..h.len())
                .map(|k| {
                    let (a, b, v) = (problem.bounds.ua.values[k], problem.bounds.ub.values[k], u.values[k]);
                    let mut x = h.values[k];
                    if v <= a + tol {
                        x = x.max(0.0);
                    }
                    if v >= b - tol {
                        x = x.min(0.0);
                    }
                    x
                })
                .collect(),
        }
    };
    let (p, _) = ctx.adjoint(y)?;
    let mut dirs = vec![project(&p.axpy(problem.alpha, u).scale(-1.0))];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_dirs {
        let raw = Field { values: (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        dirs.push(project(&raw));
    }
    let mut best = 0.0_f64;
    for h in dirs {
        let n = norm_l2(grid, &h)?;
        if n == 0.0 {
            continue;
        }
        best = best.min(ctx.dderiv(u, y, &h.scale(1.0 / n))?.value);
    }
    Ok(best)
}

/// Runs the method from `problem.u_init`.
pub fn run(problem: &Problem, cfg: &DescentConfig) -> Result<RunReport> {
    run_with_observer(problem, cfg, &mut |_| {})
}

/// Like [`run`], calling `observer` after every outer iteration.
pub fn run_with_observer(
    problem: &Problem,
    cfg: &DescentConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunReport> {
    cfg.validate()?;
    let model = problem.model();
    let ctx = Ctx::new(problem, &model, cfg);
    let start = Instant::now();
    let out = ctx.descend(problem.u_init.clone(), cfg.max_outer, true, observer)?;
    let (p, _) = ctx.adjoint(&out.y)?;
    let mut report = RunReport {
        cost: ctx.cost(&out.u, &out.y)?,
        initial_cost: out.initial_cost,
        records: out.records,
        u: out.u,
        y: out.y,
        p,
        final_h_norm: out.final_h_norm,
        termination: out.termination,
        converged: false,
        robustifications: out.robustifications,
        message: out.message,
        cpu_seconds: start.elapsed().as_secs_f64(),
    };
    report.converged = match report.termination {
        Termination::HStop | Termination::RoundoffFloor => true,
        Termination::MaxOuter => {
            let first = report.records.first().map_or(f64::INFINITY, |r| r.h_norm);
            out.state_ok && report.h_decays() && report.final_h_norm <= 1e-6 * first
        }
        _ => false,
    };
    Ok(report)
}

struct DirDeriv {
    value: f64,
    /// `|⟨y - g, z⟩| + α|⟨u, h⟩|`, the size of the cancelling terms.
    scale: f64,
}

impl DirDeriv {
    fn is_descent(&self) -> bool {
        self.value < -1e-14 * self.scale
    }

    fn is_roundoff(&self) -> bool {
        self.value.abs() <= roundoff(self.scale)
    }
}

struct Outcome {
    u: Field,
    y: Field,
    records: Vec<IterationRecord>,
    initial_cost: f64,
    final_h_norm: f64,
    termination: Termination,
    robustifications: usize,
    state_ok: bool,
    message: Option<String>,
}

struct Ctx<'a> {
    p: &'a Problem,
    model: &'a dyn Nonlinearity,
    cfg: &'a DescentConfig,
    lambda: f64,
}

impl<'a> Ctx<'a> {
    fn new(p: &'a Problem, model: &'a dyn Nonlinearity, cfg: &'a DescentConfig) -> Self {
        let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(p.alpha));
        Self { p, model, cfg, lambda }
    }

    fn state(&self, u: &Field, init: Option<&Field>) -> Result<StateSolution> {
        solve_state(&self.p.grid, self.model, &u.add(&self.p.f), init, &self.cfg.newton)
    }

    fn cost(&self, u: &Field, y: &Field) -> Result<f64> {
        let grid = &self.p.grid;
        let r = y.sub(&self.p.g);
        Ok(0.5 * inner(grid, &r, &r)? + 0.5 * self.p.alpha * inner(grid, u, u)?)
    }

    fn merit(&self, u: &Field, y: &Field) -> Result<f64> {
        Ok(self.cost(u, y)? + self.cfg.kappa * self.p.bounds.violation(&self.p.grid, u))
    }

    /// `(-Δ + D₀(y)) p = y - g`.
    fn adjoint(&self, y: &Field) -> Result<(Field, bool)> {
        let c = self.model.d0_field(&self.p.grid, y);
        solve_with_fallback(&self.p.grid, &c, &y.sub(&self.p.g))
    }

    fn dderiv(&self, u: &Field, y: &Field, h: &Field) -> Result<DirDeriv> {
        let grid = &self.p.grid;
        let z = sensitivity(grid, self.model, y, h, &self.cfg.newton)?;
        let t1 = inner(grid, &y.sub(&self.p.g), &z)?;
        let t2 = self.p.alpha * inner(grid, u, h)?;
        Ok(DirDeriv { value: t1 + t2, scale: t1.abs() + t2.abs() })
    }

    fn descend(
        &self,
        u0: Field,
        budget: usize,
        allow_robust: bool,
        observer: &mut dyn FnMut(&IterationRecord),
    ) -> Result<Outcome> {
        let cfg = self.cfg;
        let grid = &self.p.grid;
        let alpha = self.p.alpha;
        let start = Instant::now();
        let mut u = u0;
        let first = self.state(&u, None)?;
        let mut state_ok = first.converged;
        let mut y = first.y;
        let mut e = self.merit(&u, &y)?;
        let initial_cost = self.cost(&u, &y)?;
        let mut eps = cfg.eps0;
        let mut delta = cfg.delta0;
        let mut records = Vec::new();
        let mut robustifications = 0;
        let mut floor_hits = 0;
        let mut prev_h = f64::INFINITY;
        let mut final_h_norm = f64::INFINITY;
        let mut message = None;

        let termination = 'outer: loop {
            if records.len() >= budget {
                break Termination::MaxOuter;
            }
            let iter = records.len() + 1;
            let (p0, _) = self.adjoint(&y)?;
            let mut qm = QuadraticModel::new(grid, self.model, &y, alpha)?;
            let lin = pdas_linear(&mut qm, &u, &p0, &self.p.bounds, self.lambda, &cfg.subproblem.pdas)?;
            let ns = nonsmooth_fraction(grid, self.model, &y, cfg.ns_tol);
            let mut h = lin.h.clone();
            let mut kkt = lin.residual;
            let mut shrinks = 0;
            // Steps this small do not change `u` in floating point.
            let invisible = roundoff(norm_l2(grid, &u)?);
            let dd = if ns > 0.0 {
                let mut warm =
                    SubproblemSolution { h: lin.h, mu: lin.mu, sets: lin.sets, ..SubproblemSolution::zeros(grid) };
                loop {
                    let data = SubproblemData {
                        grid,
                        model: self.model,
                        fam: SmoothingFamily::new(SmoothingKind::PiecewisePolynomial, eps)?,
                        u: &u,
                        y: &y,
                        g: &self.p.g,
                        bounds: &self.p.bounds,
                        lambda: self.lambda,
                    };
                    let sub = solve_kkt_sub(&mut qm, &data, Some(&warm), &cfg.subproblem)?;
                    h = sub.h.clone();
                    kkt = sub.kkt_residual;
                    let dd = self.dderiv(&u, &y, &h)?;
                    let hn = norm_l2(grid, &h)?;
                    if dd.is_descent() || dd.is_roundoff() || hn <= cfg.h_stop || hn <= invisible {
                        break dd;
                    }
                    shrinks += 1;
                    eps = (eps * cfg.c1).max(1e-300);
                    if shrinks > cfg.max_eps_shrinks {
                        final_h_norm = norm_l2(grid, &h)?;
                        break 'outer Termination::ApproxStationary;
                    }
                    warm = sub;
                }
            } else {
                self.dderiv(&u, &y, &h)?
            };
            let h_norm = norm_l2(grid, &h)?;
            final_h_norm = h_norm;
            if h_norm <= cfg.h_stop {
                break Termination::HStop;
            }
            if !dd.is_descent() {
                break if dd.is_roundoff() || h_norm <= invisible {
                    Termination::RoundoffFloor
                } else {
                    Termination::ApproxStationary
                };
            }

            let curvature = qm.q_apply(&h)?.1;
            let mut trial: Option<(f64, Field, Field)> = None;
            let ls = armijo(
                |tau| {
                    let ut = u.axpy(tau, &h);
                    let s = self.state(&ut, Some(&y)).ok().filter(|s| s.converged)?;
                    let et = self.merit(&ut, &s.y).ok()?;
                    trial = Some((tau, ut, s.y));
                    Some(et)
                },
                e,
                dd.value,
                h_norm,
                Some(curvature),
                cfg,
            );
            let mut robustified = false;
            if ls.accepted {
                let (tau, ut, yt) = trial.take().expect("accepted trial was evaluated");
                debug_assert_eq!(tau, ls.tau);
                u = ut;
                y = yt;
                eps = (eps * cfg.c1).max(1e-300);
            } else if allow_robust {
                log::debug!("line search collapsed at iteration {iter}; robustifying with delta = {delta:e}");
                u = robustify(self.p, &u, delta, cfg.robust_budget, cfg)?;
                let s = self.state(&u, Some(&y))?;
                state_ok &= s.converged;
                y = s.y;
                delta *= cfg.c2;
                robustified = true;
                robustifications += 1;
            } else {
                message = Some(format!("line search collapsed at iteration {iter}"));
                break Termination::LineSearchFailure;
            }
            e = self.merit(&u, &y)?;
            let rec = IterationRecord {
                iter,
                cost: self.cost(&u, &y)?,
                merit: e,
                h_norm,
                tau: if ls.accepted { ls.tau } else { 0.0 },
                dderiv: dd.value,
                eps,
                delta,
                robustified,
                nonsmooth_fraction: ns,
                eps_shrinks: shrinks,
                model_step: ls.model_step,
                kkt_residual: kkt,
                cpu_seconds: start.elapsed().as_secs_f64(),
            };
            log::debug!(
                "iter {iter}: cost {:.6e} |h| {:.3e} tau {:.3e} ns {:.3} shrinks {shrinks}{}",
                rec.cost,
                h_norm,
                rec.tau,
                ns,
                if ls.model_step { " (model)" } else { "" }
            );
            observer(&rec);
            records.push(rec);

            if ls.model_step && h_norm >= 0.9 * prev_h {
                floor_hits += 1;
                if floor_hits >= 3 {
                    break Termination::RoundoffFloor;
                }
            } else {
                floor_hits = 0;
            }
            prev_h = h_norm;
        };
        Ok(Outcome { u, y, records, initial_cost, final_h_norm, termination, robustifications, state_ok, message })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn relu_problem(dx: f64, alpha: f64) -> Problem {
        let grid = Grid::square(0.0, 1.0, dx).unwrap();
        let g = Field::from_fn(&grid, |x, y| (PI * x).sin() * (PI * y).sin() * (x - 0.4));
        Problem::new(
            grid.clone(),
            ReluNet::relu(),
            Field::zeros(&grid),
            g,
            alpha,
            BoxBounds::constant(&grid, -1e12, 1e12).unwrap(),
            Field::zeros(&grid),
        )
        .unwrap()
    }

    #[test]
    fn armijo_accepts_full_step_on_quadratic() {
        // E(τ) = (1 - τ)², dJ = -2, Newton step: full step satisfies ν = 1/2.
        let cfg = DescentConfig { nu: 0.5, ..DescentConfig::default() };
        let r = armijo(|t| Some((1.0 - t) * (1.0 - t)), 1.0, -2.0, 1.0, None, &cfg);
        assert!(r.accepted);
        assert_eq!((r.tau, r.trials), (1.0, 1));
    }

    #[test]
    fn armijo_backtracks_and_floors() {
        let cfg = DescentConfig { nu: 0.9, ..DescentConfig::default() };
        let r = armijo(|t| Some((1.0 - t) * (1.0 - t)), 1.0, -2.0, 1.0, None, &cfg);
        assert!(r.accepted);
        assert!(r.tau < 0.25 && r.tau > 0.1, "{r:?}");
        let never = armijo(|_| None, 1.0, -2.0, 1.0, None, &cfg);
        assert!(!never.accepted);
        assert!(never.tau <= cfg.tau_min);
    }

    #[test]
    fn alpha_scaling_of_objective() {
        let p1 = relu_problem(1.0 / 8.0, 0.1);
        let p2 = Problem { alpha: 0.2, ..p1.clone() };
        let u = Field::from_fn(&p1.grid, |x, y| x + y);
        let (j1, _) = reduced_objective(&p1, &u).unwrap();
        let (j2, _) = reduced_objective(&p2, &u).unwrap();
        let uu = inner(&p1.grid, &u, &u).unwrap();
        assert!((j2 - j1 - 0.05 * uu).abs() < 1e-12);
    }

    #[test]
    fn dderiv_matches_adjoint_at_smooth_points() {
        let p = relu_problem(1.0 / 16.0, 0.1);
        let u = Field::from_fn(&p.grid, |x, y| 5.0 + x * y);
        let (_, y) = reduced_objective(&p, &u).unwrap();
        assert_eq!(nonsmooth_fraction(&p.grid, &p.model(), &y, 1e-10), 0.0);
        let h = Field::from_fn(&p.grid, |x, _| (2.0 * x).cos());
        let dj = reduced_dderiv(&p, &u, &y, &h).unwrap();
        let model = p.model();
        let cfg = DescentConfig::default();
        let ctx = Ctx::new(&p, &model, &cfg);
        let (adj, _) = ctx.adjoint(&y).unwrap();
        let expect = inner(&p.grid, &adj.axpy(p.alpha, &u), &h).unwrap();
        assert!((dj - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
        assert_eq!(reduced_dderiv(&p, &u, &y, &Field::zeros(&p.grid)).unwrap(), 0.0);
    }

    #[test]
    fn nonsmooth_fraction_extremes() {
        let grid = Grid::square(0.0, 1.0, 0.25).unwrap();
        let m = NetModel::new(ReluNet::relu()).unwrap();
        let y = Field::constant(&grid, 1.0);
        assert_eq!(nonsmooth_fraction(&grid, &m, &y, 1e-10), 0.0);
        assert_eq!(nonsmooth_fraction(&grid, &m, &y, f64::INFINITY), 1.0);
    }

    #[test]
    fn run_decreases_cost_and_converges() {
        let p = relu_problem(1.0 / 16.0, 1e-2);
        let report = run(&p, &DescentConfig::default()).unwrap();
        assert!(report.converged, "{:?} {:?}", report.termination, report.final_h_norm);
        assert!(report.cost < report.initial_cost);
        let mut prev = report.initial_cost;
        for r in &report.records {
            assert!(r.merit <= prev + roundoff(prev.abs()), "{r:?}");
            prev = r.merit;
        }
        let res = b_stationarity_residual(&p, &report.u, &report.y, 8, 7).unwrap();
        assert!(res >= -1e-6, "{res}");
    }

    #[test]
    fn restart_from_solution_stops_quickly() {
        let p = relu_problem(1.0 / 16.0, 1e-1);
        let first = run(&p, &DescentConfig::default()).unwrap();
        let again = run(&Problem { u_init: first.u.clone(), ..p }, &DescentConfig::default()).unwrap();
        assert!(again.converged);
        assert!(again.iterations() <= 2, "{}", again.iterations());
    }

    #[test]
    fn robustify_with_zero_budget_is_identity() {
        let p = relu_problem(1.0 / 8.0, 1e-1);
        let u = Field::from_fn(&p.grid, |x, _| x);
        assert_eq!(robustify(&p, &u, 0.1, 0, &DescentConfig::default()).unwrap(), u);
    }

    #[test]
    fn stationarity_residual_detects_descent_and_pinned_controls() {
        let p = relu_problem(1.0 / 8.0, 1e-1);
        let u = Field::from_fn(&p.grid, |x, _| x);
        let (_, y) = reduced_objective(&p, &u).unwrap();
        assert!(b_stationarity_residual(&p, &u, &y, 4, 1).unwrap() < 0.0);
        let pinned = Problem { bounds: BoxBounds::new(u.clone(), u.clone()).unwrap(), u_init: u.clone(), ..p };
        assert_eq!(b_stationarity_residual(&pinned, &u, &y, 4, 1).unwrap(), 0.0);
    }

    #[test]
    fn report_round_trips_through_json() {
        let p = relu_problem(1.0 / 8.0, 1e-1);
        let report = run(&p, &DescentConfig { max_outer: 3, ..DescentConfig::default() }).unwrap();
        let back = RunReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), report.iterations() + 1);
    }

    #[test]
    fn config_validation() {
        assert!(DescentConfig::default().validate().is_ok());
        assert!(DescentConfig { nu: 1.0, ..DescentConfig::default() }.validate().is_err());
        assert!(DescentConfig { eta: 0.0, ..DescentConfig::default() }.validate().is_err());
    }
}
