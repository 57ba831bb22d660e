//! Benchmark problems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::descent::Problem;
use crate::error::Result;
use crate::grid::{laplacian_apply, residual_norm, Field, Grid, ResidualMode};
use crate::model::{NetModel, Nonlinearity};
use crate::net::{Layer, ReluNet};
use crate::state::{solve_state, NewtonConfig};
use crate::subproblem::BoxBounds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetKind {
    Monotone,
    Nonmonotone,
}

/// How the tracking target of the two-layer problems is built from `(u₀, y₀)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GConstruction {
    /// `g = y₀ + α(-Δ_h + D₀(y₀))u₀`, which makes `u₀` a stationary point.
    Kkt,
    /// `g = y₀`.
    #[default]
    State,
}

/// The two-hidden-layer scalar network with widths 3 and 2.
///
/// The monotone and nonmonotone variants differ only in the weight
/// connecting the third first-layer neuron to the second second-layer neuron.
pub fn two_layer_network(kind: NetKind) -> ReluNet {
    let w23 = match kind {
        NetKind::Monotone => -0.03,
        NetKind::Nonmonotone => -0.12,
    };
    ReluNet::new(vec![
        Layer::new(3, 1, vec![5.0, 0.1, 10.0], vec![10.0, -1.0, -60.0]).unwrap(),
        Layer::new(2, 3, vec![0.3, 2.0, -0.16, 0.1, 1.0, w23], vec![0.0, 1.0]).unwrap(),
        Layer::new(1, 2, vec![2.0, 1.5], vec![0.0]).unwrap(),
    ])
    .unwrap()
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub problem: Problem,
    pub u_exact: Option<Field>,
    pub y_exact: Option<Field>,
    pub p_exact: Option<Field>,
    /// Control the data was generated from.
    pub u_data: Option<Field>,
}

impl Fixture {
    /// Largest `H⁻¹` residual of the discrete state and adjoint equations at the
    /// exact triple, with the adjoint taken as `-αu*`.
    pub fn discrete_kkt_residual(&self) -> Option<f64> {
        let (u, y) = (self.u_exact.as_ref()?, self.y_exact.as_ref()?);
        let pr = &self.problem;
        let grid = &pr.grid;
        let model = pr.model();
        let state = laplacian_apply(grid, y).ok()?.add(&model.value_field(grid, y)).sub(u).sub(&pr.f);
        let p = u.scale(-pr.alpha);
        let d0 = model.d0_field(grid, y);
        let adjoint = laplacian_apply(grid, &p).ok()?.add(&d0.zip_map(&p, |c, v| c * v)).sub(&y.sub(&pr.g));
        let norm = |r: &Field| residual_norm(grid, r, ResidualMode::Hminus1).ok();
        Some(norm(&state)?.max(norm(&adjoint)?))
    }
}

/// `s⁴ + s³/2` for `s = x₁ - ½ < 0`, times `sin(πx₂)`; zero on the right half.
pub fn single_max_exact(x1: f64, x2: f64) -> f64 {
    let s = x1 - 0.5;
    if s < 0.0 {
        (s.powi(4) + 0.5 * s.powi(3)) * (PI * x2).sin()
    } else {
        0.0
    }
}

/// `Δ` of [`single_max_exact`].
pub fn single_max_laplacian(x1: f64, x2: f64) -> f64 {
    let s = x1 - 0.5;
    if s < 0.0 {
        let phi = s.powi(4) + 0.5 * s.powi(3);
        let phi2 = 12.0 * s * s + 3.0 * s;
        (phi2 - PI * PI * phi) * (PI * x2).sin()
    } else {
        0.0
    }
}

/// `-Δy + max(0, y) = u + f` on the unit square with the manufactured optimum
/// `y* = p*` from [`single_max_exact`], `u* = p*/α` and no active bounds.
pub fn fixture_single_max(dx: f64, alpha: f64) -> Result<Fixture> {
    let grid = Grid::square(0.0, 1.0, dx)?;
    let y = Field::from_fn(&grid, single_max_exact);
    let lap = Field::from_fn(&grid, single_max_laplacian);
    let u = y.scale(1.0 / alpha);
    let f = Field { values: (0..grid.len()).map(|k| -lap.values[k] + y.values[k].max(0.0) - u.values[k]).collect() };
    // The adjoint coefficient vanishes because y* ≤ 0.
    let g = y.sub(&lap);
    let problem = Problem::new(
        grid.clone(),
        ReluNet::relu(),
        f,
        g,
        alpha,
        BoxBounds::constant(&grid, -1e12, 1e12)?,
        Field::zeros(&grid),
    )?;
    Ok(Fixture {
        name: "single-max".into(),
        problem,
        u_exact: Some(u),
        y_exact: Some(y.clone()),
        p_exact: Some(y),
        u_data: None,
    })
}

/// The two-layer network problem on `(0, 2)²` with data generated from
/// `g₀ = 200 sin(πx) sin(πy)` and bounds `±1000`.
pub fn fixture_two_layer(kind: NetKind, dx: f64, alpha: f64) -> Result<Fixture> {
    fixture_two_layer_with(kind, dx, alpha, GConstruction::default())
}

pub fn fixture_two_layer_with(kind: NetKind, dx: f64, alpha: f64, gc: GConstruction) -> Result<Fixture> {
    let (ua, ub) = (-1000.0, 1000.0);
    let grid = Grid::square(0.0, 2.0, dx)?;
    let net = two_layer_network(kind);
    let model = NetModel::new(net.clone())?;
    let g0 = Field::from_fn(&grid, |x, y| 200.0 * (PI * x).sin() * (PI * y).sin());
    let u0 = Field {
        values: (0..grid.len())
            .map(|k| (2.0 * PI * PI * g0.values[k] + model.value(grid.point(k), g0.values[k])).clamp(ua, ub))
            .collect(),
    };
    let y0 = solve_state(&grid, &model, &u0, None, &NewtonConfig::default())?.y;
    let g = match gc {
        GConstruction::Kkt => {
            let d0 = model.d0_field(&grid, &y0);
            let au = laplacian_apply(&grid, &u0)?.add(&d0.zip_map(&u0, |c, v| c * v));
            y0.axpy(alpha, &au)
        }
        GConstruction::State => y0.clone(),
    };
    let name = match kind {
        NetKind::Monotone => "two-layer-mono",
        NetKind::Nonmonotone => "two-layer-nonmono",
    };
    let problem = Problem::new(
        grid.clone(),
        net,
        Field::zeros(&grid),
        g,
        alpha,
        BoxBounds::constant(&grid, ua, ub)?,
        Field::zeros(&grid),
    )?;
    Ok(Fixture { name: name.into(), problem, u_exact: None, y_exact: None, p_exact: None, u_data: Some(u0) })
}
