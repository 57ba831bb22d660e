//! Smooth approximations of the ReLU and the smoothed directional operator.
//!
//! Two different objects are built from a smoothing `σ_ε`:
//!
//! * the *smoothed network* `𝒩_ε`, obtained by replacing every activation,
//!   which may destroy monotonicity of `𝒩` (see [`counterexample_fixtures`]);
//! * the *smoothed directional operator* `𝒟_ε(y; d)`, which keeps the exact
//!   activation pattern of `𝒩` at `y` and only smooths the `max(0, ·)` that
//!   acts on directions at kinks. This is what the descent subproblem uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Layer, ReluNet};

/// Guard beyond which softplus is replaced by its asymptotes.
const SOFTPLUS_CUTOFF: f64 = 35.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothingKind {
    /// `ε(s³ - s⁴/2)` with `s = t/ε` on `(0, ε)`, `t - ε/2` beyond. C² everywhere.
    PiecewisePolynomial,
    /// `ε log(1 + exp(t/ε))`.
    Softplus,
    /// Quadratic blend on `|t| ≤ ε/2`, exact ReLU outside.
    QuadraticKnee,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFamily {
    kind: SmoothingKind,
    epsilon: f64,
}

impl SmoothingFamily {
    pub fn new(kind: SmoothingKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::NonPositiveEpsilon(epsilon));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn kind(&self) -> SmoothingKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.kind, epsilon)
    }

    pub fn value(&self, t: f64) -> f64 {
        let eps = self.epsilon;
        match self.kind {
            SmoothingKind::PiecewisePolynomial => {
                if t <= 0.0 {
                    0.0
                } else if t >= eps {
                    t - 0.5 * eps
                } else {
                    let s = t / eps;
                    eps * s * s * s * (1.0 - 0.5 * s)
                }
            }
            SmoothingKind::Softplus => {
                let s = t / eps;
                if s > SOFTPLUS_CUTOFF {
                    t
                } else if s < -SOFTPLUS_CUTOFF {
                    0.0
                } else {
                    eps * s.exp().ln_1p()
                }
            }
            SmoothingKind::QuadraticKnee => {
                let half = 0.5 * eps;
                if t <= -half {
                    0.0
                } else if t >= half {
                    t
                } else {
                    (t + half) * (t + half) / (2.0 * eps)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let eps = self.epsilon;
        match self.kind {
            SmoothingKind::PiecewisePolynomial => {
                if t <= 0.0 {
                    0.0
                } else if t >= eps {
                    1.0
                } else {
                    let s = t / eps;
                    s * s * (3.0 - 2.0 * s)
                }
            }
            SmoothingKind::Softplus => {
                let s = t / eps;
                if s > SOFTPLUS_CUTOFF {
                    1.0
                } else if s < -SOFTPLUS_CUTOFF {
                    0.0
                } else {
                    1.0 / (1.0 + (-s).exp())
                }
            }
            SmoothingKind::QuadraticKnee => {
                let half = 0.5 * eps;
                if t <= -half {
                    0.0
                } else if t >= half {
                    1.0
                } else {
                    (t + half) / eps
                }
            }
        }
    }

    pub(crate) fn value_and_derivative(&self, t: f64) -> (f64, f64) {
        (self.value(t), self.derivative(t))
    }
}

pub fn sigma_eps(fam: &SmoothingFamily, t: f64) -> f64 {
    fam.value(t)
}

pub fn sigma_eps_prime(fam: &SmoothingFamily, t: f64) -> f64 {
    fam.derivative(t)
}

/// `𝒩_ε(x)`: the network with every activation replaced by `σ_ε`.
pub fn smoothed_net_eval(net: &ReluNet, fam: &SmoothingFamily, x: &[f64]) -> Result<f64> {
    check_dim(net, x)?;
    Ok(net.forward_with(x, |v| fam.value(v)).output)
}

/// `∇𝒩_ε(x)` by reverse accumulation with `σ_ε'`.
pub fn smoothed_net_grad(net: &ReluNet, fam: &SmoothingFamily, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(net, x)?;
    Ok(smoothed_grad_unchecked(net, fam, x))
}

pub(crate) fn smoothed_grad_unchecked(net: &ReluNet, fam: &SmoothingFamily, x: &[f64]) -> Vec<f64> {
    let trace = net.forward_with(x, |v| fam.value(v));
    let layers = net.layers();
    let n = layers.len();
    let mut g = layers[n - 1].weights.clone();
    for l in (0..n - 1).rev() {
        let layer: &Layer = &layers[l];
        let mut next = vec![0.0; layer.cols];
        for (i, &pre) in trace.pre_activations[l].iter().enumerate() {
            let gi = g[i] * fam.derivative(pre);
            if gi != 0.0 {
                for (acc, w) in next.iter_mut().zip(layer.row(i)) {
                    *acc += gi * w;
                }
            }
        }
        g = next;
    }
    g
}

/// `𝒟_ε(y; d)`: the directional recursion with `max(0, ·)` on directions replaced by `σ_ε`.
pub fn d_eps(net: &ReluNet, fam: &SmoothingFamily, y: f64, d: f64, frozen: &[f64]) -> Result<f64> {
    Ok(d_eps_with_slope(net, fam, y, d, frozen)?.0)
}

/// `∂_d 𝒟_ε(y; d)`, the chain rule through the same recursion.
pub fn d_eps_partial(net: &ReluNet, fam: &SmoothingFamily, y: f64, d: f64, frozen: &[f64]) -> Result<f64> {
    Ok(d_eps_with_slope(net, fam, y, d, frozen)?.1)
}

pub fn d_eps_with_slope(net: &ReluNet, fam: &SmoothingFamily, y: f64, d: f64, frozen: &[f64]) -> Result<(f64, f64)> {
    let x = net.assemble_input(frozen, y)?;
    let trace = net.trace(&x);
    Ok(net.propagate_direction(&trace, d, |v| fam.value_and_derivative(v)))
}

fn check_dim(net: &ReluNet, x: &[f64]) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), got: x.len() });
    }
    Ok(())
}

/// Networks realising the zero function whose canonical smoothings are not monotone.
///
/// The first is `σ(t) + σ(4t) - σ(2t) - σ(3t)` paired with the quadratic knee,
/// whose smoothed derivative is `4t/ε` near the origin. The second is
/// `σ(-σ(t))` paired with softplus, whose smoothing decreases from `ε log 2`
/// towards zero.
pub fn counterexample_fixtures() -> Vec<(ReluNet, SmoothingFamily)> {
    counterexample_fixtures_at(0.1)
}

pub fn counterexample_fixtures_at(epsilon: f64) -> Vec<(ReluNet, SmoothingFamily)> {
    let cancelling = ReluNet::new(vec![
        Layer::new(4, 1, vec![1.0, 4.0, 2.0, 3.0], vec![0.0; 4]).unwrap(),
        Layer::new(1, 4, vec![1.0, 1.0, -1.0, -1.0], vec![0.0]).unwrap(),
    ])
    .unwrap();
    let nested = ReluNet::new(vec![
        Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
        Layer::new(1, 1, vec![-1.0], vec![0.0]).unwrap(),
        Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
    ])
    .unwrap();
    vec![
        (cancelling, SmoothingFamily::new(SmoothingKind::QuadraticKnee, epsilon).unwrap()),
        (nested, SmoothingFamily::new(SmoothingKind::Softplus, epsilon).unwrap()),
    ]
}
