//! Descent-direction subproblems.
//!
//! At a control `u` with state `y` the linearized operator is
//! `A = -Δ_h + diag(max(D₀(y), 0))`, `Π₀ = A⁻¹`, and the quadratic form is
//! `q(h, h) = ‖Π₀ h‖² + α‖h‖²` with derivative `Q = A⁻² + α`. Box constraints
//! on `u + h` are handled by a primal-dual active-set iteration on the
//! reduced system `(A² + α⁻¹ diag(1_I)) t = r`, which is assembled and
//! factored directly.

use serde::{Deserialize, Serialize};

use crate::banded::{BandCholesky, SparseRows};
use crate::error::{Error, Result};
use crate::grid::{assemble, inner, laplacian_apply, norm_l2, EllipticOp, Field, Grid};
use crate::model::Nonlinearity;
use crate::smoothing::SmoothingFamily;
use crate::state::{newton_pointwise, solve_with_fallback, CoeffPolicy, NewtonConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub ua: Field,
    pub ub: Field,
}

impl BoxBounds {
    pub fn new(ua: Field, ub: Field) -> Result<Self> {
        if ua.len() != ub.len() {
            return Err(Error::ShapeMismatch { expected: ua.len(), got: ub.len() });
        }
        if ua.values.iter().zip(&ub.values).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidConfig("lower bound exceeds upper bound".into()));
        }
        Ok(Self { ua, ub })
    }

    pub fn constant(grid: &Grid, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Field::constant(grid, lo), Field::constant(grid, hi))
    }

    pub fn project(&self, u: &Field) -> Field {
        Field {
            values: u
                .values
                .iter()
                .zip(self.ua.values.iter().zip(&self.ub.values))
                .map(|(&v, (&a, &b))| v.max(a).min(b))
                .collect(),
        }
    }

    /// `Ψ(u) = ‖max(0, u - u_b)‖ + ‖min(0, u - u_a)‖`.
    pub fn violation(&self, grid: &Grid, u: &Field) -> f64 {
        let over = u.zip_map(&self.ub, |v, b| (v - b).max(0.0));
        let under = u.zip_map(&self.ua, |v, a| (v - a).min(0.0));
        norm_l2(grid, &over).unwrap_or(f64::NAN) + norm_l2(grid, &under).unwrap_or(f64::NAN)
    }

    pub fn contains(&self, u: &Field, tol: f64) -> bool {
        u.values
            .iter()
            .zip(self.ua.values.iter().zip(&self.ub.values))
            .all(|(&v, (&a, &b))| v >= a - tol && v <= b + tol)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSets {
    pub aplus: Vec<bool>,
    pub aminus: Vec<bool>,
}

impl ActiveSets {
    pub fn empty(n: usize) -> Self {
        Self { aplus: vec![false; n], aminus: vec![false; n] }
    }

    pub fn is_inactive(&self, k: usize) -> bool {
        !self.aplus[k] && !self.aminus[k]
    }

    pub fn inactive_mask(&self) -> Vec<bool> {
        (0..self.aplus.len()).map(|k| self.is_inactive(k)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.aplus.iter().zip(&self.aminus).filter(|(p, m)| **p || **m).count()
    }

    fn estimate(u: &Field, h: &Field, mu: &Field, bounds: &BoxBounds, lambda: f64) -> Self {
        let n = u.len();
        let mut s = Self::empty(n);
        for k in 0..n {
            let v = u.values[k] + h.values[k];
            if mu.values[k] + lambda * (v - bounds.ub.values[k]) > 0.0 {
                s.aplus[k] = true;
            } else if mu.values[k] + lambda * (v - bounds.ua.values[k]) < 0.0 {
                s.aminus[k] = true;
            }
        }
        s
    }
}

/// `μ - max(0, μ + λ(u + h - u_b)) - min(0, μ + λ(u + h - u_a))`.
pub fn complementarity_residual(u: &Field, h: &Field, mu: &Field, bounds: &BoxBounds, lambda: f64) -> Field {
    Field {
        values: (0..u.len())
            .map(|k| {
                let v = u.values[k] + h.values[k];
                let m = mu.values[k];
                m - (m + lambda * (v - bounds.ub.values[k])).max(0.0)
                    - (m + lambda * (v - bounds.ua.values[k])).min(0.0)
            })
            .collect(),
    }
}

/// Default PDAS parameter: `λ = α`, or `10⁻⁶` for vanishing `α`.
pub fn default_lambda(alpha: f64) -> f64 {
    if alpha <= 1e-12 {
        1e-6
    } else {
        alpha
    }
}

/// Linearization of the control-to-state map at a fixed state, with the
/// factorizations needed by the subproblem solvers.
#[derive(Debug)]
pub struct QuadraticModel {
    grid: Grid,
    op: EllipticOp,
    alpha: f64,
    op_squared: SparseRows,
    reduced: Option<(Vec<bool>, BandCholesky)>,
}

impl QuadraticModel {
    pub fn new(grid: &Grid, model: &dyn Nonlinearity, y: &Field, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        grid.check(y)?;
        let coeff = model.d0_field(grid, y).map(|c| c.max(0.0));
        let op = assemble(grid, &coeff)?;
        let op_squared = op.sparse_rows().square();
        Ok(Self { grid: grid.clone(), op, alpha, op_squared, reduced: None })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `Π₀ h`, the solution of `(-Δ_h + max(D₀(y), 0)) d = h`.
    pub fn pi0_apply(&self, h: &Field) -> Result<Field> {
        self.op.solve(h)
    }

    /// `(Qh, q(h, h))`.
    pub fn q_apply(&self, h: &Field) -> Result<(Field, f64)> {
        let s = self.op.solve(h)?;
        let t = self.op.solve(&s)?;
        let qval = inner(&self.grid, &s, &s)? + self.alpha * inner(&self.grid, h, h)?;
        Ok((t.axpy(self.alpha, h), qval))
    }

    fn reduced_solve(&mut self, inactive: &[bool], rhs: &[f64]) -> Result<Vec<f64>> {
        let stale = match &self.reduced {
            Some((mask, _)) => mask != inactive,
            None => true,
        };
        if stale {
            let mut rows = self.op_squared.clone();
            let diag: Vec<f64> = inactive.iter().map(|&i| if i { 1.0 / self.alpha } else { 0.0 }).collect();
            rows.add_diagonal(&self.grid.to_band_order(&diag));
            let factor = rows.to_band().cholesky()?;
            self.reduced = Some((inactive.to_vec(), factor));
        }
        let (_, factor) = self.reduced.as_ref().expect("factor cached above");
        let mut v = self.grid.to_band_order(rhs);
        factor.solve_in_place(&mut v);
        Ok(self.grid.to_natural_order(&v))
    }

    /// Primal-dual active-set iteration for
    /// `Qh + grad + μ = 0` with complementarity on `u + h ∈ [u_a, u_b]`.
    pub fn pdas(
        &mut self,
        u: &Field,
        grad: &Field,
        bounds: &BoxBounds,
        lambda: f64,
        start: Option<(&Field, &Field)>,
        cfg: &PdasConfig,
    ) -> Result<PdasOutcome> {
        let n = self.grid.len();
        for f in [u, grad, &bounds.ua, &bounds.ub] {
            self.grid.check(f)?;
        }
        let alpha = self.alpha;
        let (mut h, mut mu) = match start {
            Some((h, mu)) => (h.clone(), mu.clone()),
            None => (Field::zeros(&self.grid), Field::zeros(&self.grid)),
        };
        let mut sets = ActiveSets::estimate(u, &h, &mu, bounds, lambda);
        let mut iters = 0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        while iters < cfg.max_iter {
            iters += 1;
            let inactive = sets.inactive_mask();
            let rhs: Vec<f64> = (0..n)
                .map(|k| {
                    if sets.aplus[k] {
                        bounds.ub.values[k] - u.values[k]
                    } else if sets.aminus[k] {
                        bounds.ua.values[k] - u.values[k]
                    } else {
                        -grad.values[k] / alpha
                    }
                })
                .collect();
            let t = self.reduced_solve(&inactive, &rhs)?;
            for k in 0..n {
                if inactive[k] {
                    h.values[k] = -(t[k] + grad.values[k]) / alpha;
                    mu.values[k] = 0.0;
                } else {
                    h.values[k] = rhs[k];
                    mu.values[k] = -t[k] - alpha * h.values[k] - grad.values[k];
                }
            }
            residual = norm_l2(&self.grid, &complementarity_residual(u, &h, &mu, bounds, lambda))?;
            let next = ActiveSets::estimate(u, &h, &mu, bounds, lambda);
            let unchanged = next == sets;
            sets = next;
            if residual < cfg.tol || unchanged {
                converged = true;
                break;
            }
        }
        if !converged {
            let target = bounds.project(&u.add(&h));
            h = target.sub(u);
        }
        Ok(PdasOutcome { h, mu, sets, iters, residual, converged })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdasConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PdasConfig {
    fn default() -> Self {
        Self { tol: 1e-16, max_iter: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdasOutcome {
    pub h: Field,
    pub mu: Field,
    pub sets: ActiveSets,
    pub iters: usize,
    /// `L²` norm of the complementarity row.
    pub residual: f64,
    pub converged: bool,
}

/// `Π₀ h` at the state `y`.
pub fn pi0_apply(grid: &Grid, model: &dyn Nonlinearity, y: &Field, h: &Field) -> Result<Field> {
    let coeff = model.d0_field(grid, y).map(|c| c.max(0.0));
    assemble(grid, &coeff)?.solve(h)
}

/// `(Qh, q(h, h))` at the state `y`.
pub fn q_apply(grid: &Grid, model: &dyn Nonlinearity, y: &Field, h: &Field, alpha: f64) -> Result<(Field, f64)> {
    QuadraticModel::new(grid, model, y, alpha)?.q_apply(h)
}

/// Solves the linearized subproblem with `𝒥₀'(u) = p₀ + αu`.
pub fn pdas_linear(
    qm: &mut QuadraticModel,
    u: &Field,
    p0: &Field,
    bounds: &BoxBounds,
    lambda: f64,
    cfg: &PdasConfig,
) -> Result<PdasOutcome> {
    let grad = p0.axpy(qm.alpha(), u);
    qm.pdas(u, &grad, bounds, lambda, None, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub pdas: PdasConfig,
    pub newton: NewtonConfig,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self { tol: 1e-16, max_outer: 50, pdas: PdasConfig::default(), newton: NewtonConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub h: Field,
    pub d_eps: Field,
    pub p_eps: Field,
    pub mu: Field,
    pub sets: ActiveSets,
    pub outer_iters: usize,
    pub pdas_iters: usize,
    /// Largest relative `L²` residual over the four rows of the KKT system.
    pub kkt_residual: f64,
    pub converged: bool,
    pub nonmonotone_clamped: bool,
}

impl SubproblemSolution {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            h: Field::zeros(grid),
            d_eps: Field::zeros(grid),
            p_eps: Field::zeros(grid),
            mu: Field::zeros(grid),
            sets: ActiveSets::empty(grid.len()),
            outer_iters: 0,
            pdas_iters: 0,
            kkt_residual: f64::INFINITY,
            converged: false,
            nonmonotone_clamped: false,
        }
    }
}

/// Inputs of the smoothed subproblem that stay fixed during its solution.
pub struct SubproblemData<'a> {
    pub grid: &'a Grid,
    pub model: &'a dyn Nonlinearity,
    pub fam: SmoothingFamily,
    pub u: &'a Field,
    pub y: &'a Field,
    pub g: &'a Field,
    pub bounds: &'a BoxBounds,
    pub lambda: f64,
}

struct Linearization {
    d: Field,
    p: Field,
    clamped: bool,
}

/// `S'(u; h)`: solves `-Δz + 𝒩'(y; z) = h` by semismooth Newton.
pub fn sensitivity(grid: &Grid, model: &dyn Nonlinearity, y: &Field, h: &Field, cfg: &NewtonConfig) -> Result<Field> {
    grid.check(y)?;
    let phi = |k: usize, z: f64| model.directional(grid.point(k), y.values[k], z);
    Ok(newton_pointwise(grid, h, Field::zeros(grid), phi, CoeffPolicy::Fallback, cfg)?.y)
}

/// Solves `-Δd + 𝒟_ε(y; d) = h`, the smoothed counterpart of [`sensitivity`].
pub fn smoothed_sensitivity(
    grid: &Grid,
    model: &dyn Nonlinearity,
    y: &Field,
    h: &Field,
    fam: &SmoothingFamily,
    cfg: &NewtonConfig,
) -> Result<Field> {
    grid.check(y)?;
    let phi = |k: usize, d: f64| model.smoothed_directional(grid.point(k), y.values[k], d, fam);
    Ok(newton_pointwise(grid, h, Field::zeros(grid), phi, CoeffPolicy::Fallback, cfg)?.y)
}

/// Step (i): `d` from `-Δd + 𝒟_ε(y; d) = h`, then `p` from the adjoint with `∂_d 𝒟_ε(y; d)`.
fn linearize(data: &SubproblemData, h: &Field, d0: Field, cfg: &NewtonConfig) -> Result<Linearization> {
    let grid = data.grid;
    let slope_at = |k: usize, d: f64| data.model.smoothed_directional(grid.point(k), data.y.values[k], d, &data.fam);
    let sol = newton_pointwise(grid, h, d0, slope_at, CoeffPolicy::Fallback, cfg)?;
    let coeff = Field { values: (0..grid.len()).map(|k| slope_at(k, sol.y.values[k]).1).collect() };
    let (p, clamped) = solve_with_fallback(grid, &coeff, &data.y.sub(data.g))?;
    Ok(Linearization { d: sol.y, p, clamped: clamped || sol.clamped })
}

/// Alternating Newton/PDAS solver for the smoothed subproblem.
pub fn solve_kkt_sub(
    qm: &mut QuadraticModel,
    data: &SubproblemData,
    warm: Option<&SubproblemSolution>,
    cfg: &SubproblemConfig,
) -> Result<SubproblemSolution> {
    let grid = data.grid;
    let alpha = qm.alpha();
    let mut sol = match warm {
        Some(w) => w.clone(),
        None => SubproblemSolution::zeros(grid),
    };
    sol.nonmonotone_clamped = false;
    sol.pdas_iters = 0;
    let mut prev_change = f64::INFINITY;
    let mut stalls = 0;
    let mut rounds = 0;
    sol.converged = false;
    while rounds < cfg.max_outer {
        rounds += 1;
        let lin = linearize(data, &sol.h, sol.d_eps.clone(), &cfg.newton)?;
        sol.nonmonotone_clamped |= lin.clamped;
        sol.d_eps = lin.d;
        sol.p_eps = lin.p;
        let grad = sol.p_eps.axpy(alpha, data.u);
        let out = qm.pdas(data.u, &grad, data.bounds, data.lambda, Some((&sol.h, &sol.mu)), &cfg.pdas)?;
        sol.pdas_iters += out.iters;
        let change = norm_l2(grid, &out.h.sub(&sol.h))?;
        let scale = 1.0 + norm_l2(grid, &out.h)?;
        sol.h = out.h;
        sol.mu = out.mu;
        sol.sets = out.sets;
        if change <= 1e-14 * scale {
            sol.converged = true;
            break;
        }
        if change >= 0.9 * prev_change {
            stalls += 1;
            if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        prev_change = change;
    }
    let lin = linearize(data, &sol.h, sol.d_eps.clone(), &cfg.newton)?;
    sol.nonmonotone_clamped |= lin.clamped;
    sol.d_eps = lin.d;
    sol.p_eps = lin.p;
    sol.outer_iters = rounds;
    sol.kkt_residual = kkt_residual(qm, data, &sol)?;
    sol.converged |= sol.kkt_residual < cfg.tol;
    Ok(sol)
}

/// Largest relative residual among the four rows of the smoothed KKT system.
pub fn kkt_residual(qm: &QuadraticModel, data: &SubproblemData, sol: &SubproblemSolution) -> Result<f64> {
    let grid = data.grid;
    let (y, u) = (data.y, data.u);
    let mut r1 = laplacian_apply(grid, &sol.d_eps)?;
    let coeff: Vec<f64> = (0..grid.len())
        .map(|k| {
            let (v, s) = data.model.smoothed_directional(grid.point(k), y.values[k], sol.d_eps.values[k], &data.fam);
            r1.values[k] += v - sol.h.values[k];
            s
        })
        .collect();
    let rhs2 = y.sub(data.g);
    let mut r2 = laplacian_apply(grid, &sol.p_eps)?;
    for (k, c) in coeff.iter().enumerate() {
        r2.values[k] += c * sol.p_eps.values[k] - rhs2.values[k];
    }
    let (qh, _) = qm.q_apply(&sol.h)?;
    let r3 = qh.add(&sol.p_eps).add(&sol.mu).axpy(qm.alpha(), u);
    let r4 = complementarity_residual(u, &sol.h, &sol.mu, data.bounds, data.lambda);
    let l2 = |f: &Field| norm_l2(grid, f);
    let rows = [
        l2(&r1)? / (1.0 + l2(&sol.h)?),
        l2(&r2)? / (1.0 + l2(&rhs2)?),
        l2(&r3)? / (1.0 + l2(&sol.p_eps)? + qm.alpha() * l2(u)?),
        l2(&r4)? / (1.0 + l2(&sol.mu)? + data.lambda * l2(&sol.h)?),
    ];
    Ok(rows.into_iter().fold(0.0, f64::max))
}
