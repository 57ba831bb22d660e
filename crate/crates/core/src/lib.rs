//! Optimal control of semilinear elliptic equations whose nonlinearity is a
//! ReLU network.
//!
//! The crate is organised bottom-up: [`net`] and [`smoothing`] provide the
//! network calculus, [`grid`] and [`state`] the finite-difference PDE layer,
//! [`subproblem`] the descent-direction machinery and [`descent`] the outer
//! algorithm. [`fixtures`] and [`sweep`] contain the benchmark problems and
//! the experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod descent;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod model;
pub mod net;
pub mod smoothing;
pub mod state;
pub mod subproblem;
pub mod sweep;

pub use descent::{
    armijo, b_stationarity_residual, nonsmooth_fraction, reduced_dderiv, reduced_objective, robustify, run,
    run_with_observer, ArmijoResult, DescentConfig, IterationRecord, Problem, RunReport, Termination,
};
pub use error::{Error, Result};
pub use fixtures::{fixture_single_max, fixture_two_layer, fixture_two_layer_with, Fixture, GConstruction, NetKind};
pub use grid::{Field, Grid, ResidualMode};
pub use model::{NetModel, Nonlinearity, SmoothedNetModel};
pub use net::{EvalTrace, Layer, ReluNet};
pub use smoothing::{SmoothingFamily, SmoothingKind};
pub use state::{solve_state, NewtonConfig, StateSolution};
pub use subproblem::{
    pdas_linear, pi0_apply, q_apply, sensitivity, smoothed_sensitivity, solve_kkt_sub, ActiveSets, BoxBounds,
    PdasConfig, PdasOutcome, QuadraticModel, SubproblemConfig, SubproblemData, SubproblemSolution,
};
pub use sweep::{convergence_order, emit, render, run_cell, run_sweep, Example, OutputFormat, SweepCell, SweepResult};
