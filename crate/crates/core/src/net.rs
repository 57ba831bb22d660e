//! Scalar-output ReLU feedforward networks.
//!
//! A network with `L` layers applies `L - 1` hidden affine maps each followed
//! by the ReLU, and a final affine output layer. The state variable of the PDE
//! is always the *last* input coordinate; any leading coordinates are treated
//! as frozen (spatial) inputs by the derivative routines.
//!
//! Besides plain evaluation this module provides the calculus the solver needs:
//! the almost-everywhere gradient with the convention `1_{(0,∞)}(0) = 0`, the
//! exact Hadamard directional derivative in the state variable, and the
//! distance of a point to the nearest kink.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to classify a pre-activation as sitting on a kink.
pub const DEFAULT_KINK_TOL: f64 = 1e-12;

/// One affine layer `z -> W z + b` with `W` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidNetwork("layer with zero width".into()));
        }
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: weights.len() });
        }
        if bias.len() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: bias.len() });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Self { rows, cols, weights, bias })
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    /// Writes `W z + b` into `out` and the magnitude `|b| + Σ|W z|` into `scale`.
    fn affine(&self, z: &[f64], out: &mut Vec<f64>, scale: &mut Vec<f64>) {
        out.clear();
        scale.clear();
        for i in 0..self.rows {
            let mut acc = self.bias[i];
            let mut mag = self.bias[i].abs();
            for (w, zj) in self.row(i).iter().zip(z) {
                let t = w * zj;
                acc += t;
                mag += t.abs();
            }
            out.push(acc);
            scale.push(mag);
        }
    }

    /// `W v` without the bias.
    fn linear(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(w, x)| w * x).sum()).collect()
    }

    fn inf_norm(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|w| w.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Pre-activations recorded during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTrace {
    /// `W_ℓ z_{ℓ-1} + b_ℓ` for every hidden layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// Magnitude of the summands of each pre-activation, used to scale the kink tolerance.
    pub scales: Vec<Vec<f64>>,
    pub output: f64,
}

/// Sign classification of a hidden pre-activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activity {
    Positive,
    Kink,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetDocument", into = "NetDocument")]
pub struct ReluNet {
    layers: Vec<Layer>,
    kink_tol: f64,
}

#[derive(Serialize, Deserialize)]
struct NetDocument {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl TryFrom<NetDocument> for ReluNet {
    type Error = Error;

    fn try_from(doc: NetDocument) -> Result<Self> {
        let net = ReluNet::new(doc.layers)?;
        if net.input_dim() != doc.input_dim {
            return Err(Error::DimensionMismatch { expected: doc.input_dim, got: net.input_dim() });
        }
        Ok(net)
    }
}

impl From<ReluNet> for NetDocument {
    fn from(net: ReluNet) -> Self {
        NetDocument { input_dim: net.input_dim(), layers: net.layers }
    }
}

impl ReluNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::DimensionMismatch { expected: pair[0].rows, got: pair[1].cols });
            }
        }
        let out = layers.last().map(|l| l.rows).unwrap_or(0);
        if out != 1 {
            return Err(Error::InvalidNetwork(format!("output width must be 1, got {out}")));
        }
        Ok(Self { layers, kink_tol: DEFAULT_KINK_TOL })
    }

    /// The scalar ReLU `t -> max(t, 0)` as a one-hidden-layer network.
    pub fn relu() -> Self {
        Self::new(vec![
            Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
            Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
        ])
        .unwrap()
    }

    /// One-hidden-layer network realising the continuous piecewise affine map
    /// with the given slopes, breakpoints and intercept of the leftmost piece.
    ///
    /// Repeated breakpoints are merged into a single neuron.
    pub fn from_breakpoints(slopes: &[f64], breakpoints: &[f64], intercept: f64) -> Result<Self> {
        if slopes.is_empty() {
            return Err(Error::InvalidNetwork("need at least one slope".into()));
        }
        if breakpoints.len() + 1 != slopes.len() {
            return Err(Error::DimensionMismatch { expected: slopes.len() - 1, got: breakpoints.len() });
        }
        if breakpoints.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::UnsortedBreakpoints);
        }
        // a1 max(t,0) - a1 max(-t,0) reproduces the leftmost affine piece.
        let mut w1 = vec![1.0, -1.0];
        let mut b1 = vec![0.0, 0.0];
        let mut w2 = vec![slopes[0], -slopes[0]];
        for (i, &t) in breakpoints.iter().enumerate() {
            let jump = slopes[i + 1] - slopes[i];
            if b1.len() > 2 && *b1.last().unwrap() == -t {
                *w2.last_mut().unwrap() += jump;
                continue;
            }
            w1.push(1.0);
            b1.push(-t);
            w2.push(jump);
        }
        let width = w1.len();
        Self::new(vec![Layer::new(width, 1, w1, b1)?, Layer::new(1, width, w2, vec![intercept])?])
    }

    pub fn with_kink_tol(mut self, tol: f64) -> Self {
        self.kink_tol = tol;
        self
    }

    pub fn kink_tol(&self) -> f64 {
        self.kink_tol
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Forward pass with an arbitrary activation applied to the hidden layers.
    pub(crate) fn forward_with(&self, x: &[f64], act: impl Fn(f64) -> f64) -> EvalTrace {
        let (hidden, last) = self.layers.split_at(self.layers.len() - 1);
        let mut z = x.to_vec();
        let mut pre_activations = Vec::with_capacity(hidden.len());
        let mut scales = Vec::with_capacity(hidden.len());
        let mut pre = Vec::new();
        let mut scale = Vec::new();
        for layer in hidden {
            layer.affine(&z, &mut pre, &mut scale);
            z = pre.iter().map(|&v| act(v)).collect();
            pre_activations.push(pre.clone());
            scales.push(scale.clone());
        }
        last[0].affine(&z, &mut pre, &mut scale);
        EvalTrace { pre_activations, scales, output: pre[0] }
    }

    pub(crate) fn trace(&self, x: &[f64]) -> EvalTrace {
        self.forward_with(x, |v| v.max(0.0))
    }

    pub fn eval(&self, x: &[f64]) -> Result<(f64, EvalTrace)> {
        self.check_input(x)?;
        let trace = self.trace(x);
        Ok((trace.output, trace))
    }

    /// Evaluation without the trace; panics on a dimension mismatch.
    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.input_dim(), "network input dimension");
        self.trace(x).output
    }

    pub(crate) fn classify(&self, pre: f64, scale: f64) -> Activity {
        let tol = self.kink_tol * (1.0 + scale);
        if pre > tol {
            Activity::Positive
        } else if pre < -tol {
            Activity::Negative
        } else {
            Activity::Kink
        }
    }

    /// Almost-everywhere gradient `W_L · diag(1_{(0,∞)}(·)) · … · W_1`; kinks contribute 0.
    pub fn weak_gradient_d0(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.weak_gradient_unchecked(x))
    }

    pub(crate) fn weak_gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let trace = self.trace(x);
        let n = self.layers.len();
        let mut g = self.layers[n - 1].weights.clone();
        for l in (0..n - 1).rev() {
            let layer = &self.layers[l];
            let mask: Vec<f64> = trace.pre_activations[l]
                .iter()
                .zip(&trace.scales[l])
                .map(|(&p, &s)| if self.classify(p, s) == Activity::Positive { 1.0 } else { 0.0 })
                .collect();
            let mut next = vec![0.0; layer.cols];
            for i in 0..layer.rows {
                let gi = g[i] * mask[i];
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

    /// Propagates a direction acting on the last input through the network.
    ///
    /// Strictly active neurons pass the incoming direction linearly, inactive
    /// ones drop it, and neurons on a kink apply `kink_map`. Returns the output
    /// direction together with its derivative with respect to the input
    /// direction, `kink_map` supplying both the value and its slope.
    pub(crate) fn propagate_direction(
        &self,
        trace: &EvalTrace,
        h: f64,
        kink_map: impl Fn(f64) -> (f64, f64),
    ) -> (f64, f64) {
        let n = self.layers.len();
        let first = &self.layers[0];
        let last_col = first.cols - 1;
        let mut dir: Vec<f64> = (0..first.rows).map(|i| first.row(i)[last_col] * h).collect();
        let mut slope: Vec<f64> = (0..first.rows).map(|i| first.row(i)[last_col]).collect();
        for l in 0..n - 1 {
            for ((d, s), (&p, &sc)) in
                dir.iter_mut().zip(slope.iter_mut()).zip(trace.pre_activations[l].iter().zip(&trace.scales[l]))
            {
                match self.classify(p, sc) {
                    Activity::Positive => {}
                    Activity::Negative => {
                        *d = 0.0;
                        *s = 0.0;
                    }
                    Activity::Kink => {
                        let (v, dv) = kink_map(*d);
                        *d = v;
                        *s *= dv;
                    }
                }
            }
            let next = &self.layers[l + 1];
            dir = next.linear(&dir);
            slope = next.linear(&slope);
        }
        (dir[0], slope[0])
    }

    /// Hadamard directional derivative `𝒩'_x(y; h)` in the last input coordinate.
    pub fn directional_derivative(&self, y: f64, h: f64, frozen: &[f64]) -> Result<f64> {
        let x = self.assemble_input(frozen, y)?;
        let trace = self.trace(&x);
        Ok(self.propagate_direction(&trace, h, relu_with_slope).0)
    }

    /// Smallest `|pre-activation|` over all hidden neurons (`∞` for an affine net).
    pub fn kink_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(kink_distance_of(&self.trace(x)))
    }

    pub(crate) fn assemble_input(&self, frozen: &[f64], y: f64) -> Result<Vec<f64>> {
        if frozen.len() + 1 != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim() - 1, got: frozen.len() });
        }
        let mut x = frozen.to_vec();
        x.push(y);
        Ok(x)
    }

    /// Product of the layer `∞`-norms, a global Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers.iter().map(Layer::inf_norm).product()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn relu_with_slope(v: f64) -> (f64, f64) {
    if v > 0.0 {
        (v, 1.0)
    } else {
        (0.0, 0.0)
    }
}

pub(crate) fn kink_distance_of(trace: &EvalTrace) -> f64 {
    trace.pre_activations.iter().flatten().fold(f64::INFINITY, |m, p| m.min(p.abs()))
}
