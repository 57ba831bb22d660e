//! Semismooth Newton for pointwise-nonlinear elliptic equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble, laplacian_apply, residual_norm, Field, Grid, ResidualMode};
use crate::model::Nonlinearity;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: ResidualMode,
    /// Residuals below `accept_rel * (1 + ‖rhs‖)` count as converged once progress stalls.
    pub accept_rel: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol: 1e-16, max_iter: 50, mode: ResidualMode::Hminus1, accept_rel: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSolution {
    pub y: Field,
    pub iters: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residual after every iteration, starting with the initial guess.
    pub history: Vec<f64>,
    /// The Jacobian coefficient had to be clamped to keep the linear solves definite.
    pub clamped: bool,
}

/// How negative Jacobian coefficients are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum CoeffPolicy {
    /// Always use `max(c, 0)`.
    Nonnegative,
    /// Use `c` as is, clamping at `-1/(2 C_P²)` only when the factorization breaks down.
    Fallback,
}

/// Solves `(-Δ_h + diag(c)) v = rhs`, clamping `c` from below if the operator is indefinite.
pub(crate) fn solve_with_fallback(grid: &Grid, c: &Field, rhs: &Field) -> Result<(Field, bool)> {
    match assemble(grid, c)?.solve(rhs) {
        Ok(v) => Ok((v, false)),
        Err(Error::NotPositiveDefinite { .. }) => {
            let floor = -0.5 / grid.poincare_constant().powi(2);
            let clamped = c.map(|v| v.max(floor));
            match assemble(grid, &clamped)?.solve(rhs) {
                Ok(v) => Ok((v, true)),
                Err(Error::NotPositiveDefinite { .. }) => {
                    Ok((assemble(grid, &c.map(|v| v.max(0.0)))?.solve(rhs)?, true))
                }
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

/// Newton iteration for `-Δ_h v + φ_k(v_k) = rhs`, where `phi(k, v)` returns the
/// value and a generalized derivative of the pointwise term at node `k`.
pub(crate) fn newton_pointwise(
    grid: &Grid,
    rhs: &Field,
    init: Field,
    phi: impl Fn(usize, f64) -> (f64, f64),
    policy: CoeffPolicy,
    cfg: &NewtonConfig,
) -> Result<StateSolution> {
    grid.check(rhs)?;
    grid.check(&init)?;
    let eval = |v: &Field| -> Result<(Field, Field)> {
        let mut r = laplacian_apply(grid, v)?;
        let mut c = Field::zeros(grid);
        for (k, (&vk, rk)) in v.values.iter().zip(r.values.iter_mut()).enumerate() {
            let (val, slope) = phi(k, vk);
            *rk += val - rhs.values[k];
            c.values[k] = slope;
        }
        Ok((r, c))
    };
    let accept = cfg.accept_rel * (1.0 + residual_norm(grid, rhs, cfg.mode)?);

    let mut v = init;
    let (mut r, mut c) = eval(&v)?;
    let mut res = residual_norm(grid, &r, cfg.mode)?;
    let mut history = vec![res];
    let mut best = (res, v.clone());
    let mut clamped = false;
    let mut stalls = 0;
    let mut iters = 0;
    let mut converged = res <= cfg.tol;
    while !converged && iters < cfg.max_iter && res.is_finite() {
        let (step, was_clamped) = match policy {
            CoeffPolicy::Nonnegative => (assemble(grid, &c.map(|x| x.max(0.0)))?.solve(&r)?, false),
            CoeffPolicy::Fallback => solve_with_fallback(grid, &c, &r)?,
        };
        clamped |= was_clamped;
        v = v.sub(&step);
        iters += 1;
        (r, c) = eval(&v)?;
        let next = residual_norm(grid, &r, cfg.mode)?;
        history.push(next);
        if next < best.0 {
            best = (next, v.clone());
        }
        if next <= cfg.tol {
            converged = true;
        } else if next >= 0.9 * res {
            stalls += 1;
            if best.0 <= accept {
                converged = true;
            } else if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        res = next;
    }
    let (residual, y) = best;
    let converged = converged || residual <= accept;
    Ok(StateSolution { y, iters, residual, converged, history, clamped })
}

/// Solves `-Δ_h y + 𝒩(y) = rhs` with the Jacobian coefficient `max(D₀(y), 0)`.
pub fn solve_state(
    grid: &Grid,
    model: &dyn Nonlinearity,
    rhs: &Field,
    init: Option<&Field>,
    cfg: &NewtonConfig,
) -> Result<StateSolution> {
    let init = match init {
        Some(f) => f.clone(),
        None => Field::zeros(grid),
    };
    newton_pointwise(
        grid,
        rhs,
        init,
        |k, y| {
            let pt = grid.point(k);
            (model.value(pt, y), model.d0(pt, y))
        },
        CoeffPolicy::Nonnegative,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_layer_network, NetKind};
    use crate::grid::norm_l2;
    use crate::model::NetModel;
    use crate::net::{Layer, ReluNet};
    use std::f64::consts::PI;

    fn zero_model() -> NetModel {
        NetModel::new(ReluNet::new(vec![Layer::new(1, 1, vec![0.0], vec![0.0]).unwrap()]).unwrap()).unwrap()
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let g = Grid::square(0.0, 1.0, 1.0 / 16.0).unwrap();
        let exact = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let rhs = laplacian_apply(&g, &exact).unwrap();
        let s = solve_state(&g, &zero_model(), &rhs, None, &NewtonConfig::default()).unwrap();
        assert!(s.converged);
        assert!(s.history[1] <= 1e-12 * s.history[0]);
        assert!(s.y.sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn max_state_equation_with_manufactured_solution() {
        // -Δy + max(0, y) = f with y = (x - 1/2) sin(πx) sin(πy) changing sign.
        let model = NetModel::new(ReluNet::relu()).unwrap();
        let mut errs = Vec::new();
        for dx in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let g = Grid::square(0.0, 1.0, dx).unwrap();
            let exact = Field::from_fn(&g, |x, y| (x - 0.5) * (PI * x).sin() * (PI * y).sin());
            let f = Field::from_fn(&g, |x, y| {
                let v = (PI * x).sin() * (PI * y).sin();
                let vx = PI * (PI * x).cos() * (PI * y).sin();
                2.0 * PI * PI * v * (x - 0.5) - 2.0 * vx + ((x - 0.5) * v).max(0.0)
            });
            let sol = solve_state(&g, &model, &f, None, &NewtonConfig::default()).unwrap();
            assert!(sol.converged, "{:?}", sol.history);
            assert!(sol.iters <= 10);
            errs.push(norm_l2(&g, &sol.y.sub(&exact)).unwrap() / norm_l2(&g, &exact).unwrap());
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..4.5).contains(&r), "{errs:?}");
        }
    }

    #[test]
    fn two_layer_state_converges_quadratically() {
        let g = Grid::square(0.0, 2.0, 1.0 / 16.0).unwrap();
        let model = NetModel::new(two_layer_network(NetKind::Monotone)).unwrap();
        let rhs = Field::from_fn(&g, |x, y| 1000.0 * (PI * x).sin() * (PI * y).sin());
        let sol = solve_state(&g, &model, &rhs, None, &NewtonConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iters <= 50);
        // Normalized residuals e_k: the last steps above roundoff satisfy e_{k+1} <= C e_k².
        let e: Vec<f64> = sol.history.iter().map(|r| r / sol.history[0]).collect();
        let pairs: Vec<(f64, f64)> = e.windows(2).map(|w| (w[0], w[1])).filter(|p| p.0 > 1e-12).collect();
        for &(a, b) in pairs.iter().rev().take(3) {
            assert!(b <= 10.0 * a * a || b < 1e-12, "{:?}", sol.history);
        }
    }

    #[test]
    fn fallback_clamps_indefinite_operator() {
        let g = Grid::square(0.0, 1.0, 1.0 / 8.0).unwrap();
        let c = Field::constant(&g, -1000.0);
        let (v, clamped) = solve_with_fallback(&g, &c, &Field::constant(&g, 1.0)).unwrap();
        assert!(clamped);
        assert!(v.is_finite());
    }
}
