//! Pointwise nonlinearities `𝒩(x, y)` as seen by the PDE solvers.
//!
//! The solvers never touch a network directly; they go through
//! [`Nonlinearity`], which is implemented by the exact ReLU network and by its
//! canonical smoothing. The latter is what robustification runs on.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::net::{kink_distance_of, relu_with_slope, ReluNet};
use crate::smoothing::{smoothed_grad_unchecked, SmoothingFamily};

pub trait Nonlinearity: Send + Sync {
    fn value(&self, pt: [f64; 2], y: f64) -> f64;

    /// Generalized derivative in `y` with kinks contributing zero.
    fn d0(&self, pt: [f64; 2], y: f64) -> f64;

    /// `𝒩'(y; h)` and its slope in `h`.
    fn directional(&self, pt: [f64; 2], y: f64, h: f64) -> (f64, f64);

    /// `𝒟_ε(y; d)` and `∂_d 𝒟_ε(y; d)`.
    fn smoothed_directional(&self, pt: [f64; 2], y: f64, d: f64, fam: &SmoothingFamily) -> (f64, f64);

    /// Distance to the nearest kink; `∞` for smooth models.
    fn kink_distance(&self, pt: [f64; 2], y: f64) -> f64;

    fn value_field(&self, grid: &Grid, y: &Field) -> Field {
        pointwise(grid, y, |pt, v| self.value(pt, v))
    }

    fn d0_field(&self, grid: &Grid, y: &Field) -> Field {
        pointwise(grid, y, |pt, v| self.d0(pt, v))
    }
}

pub(crate) fn pointwise(grid: &Grid, y: &Field, f: impl Fn([f64; 2], f64) -> f64) -> Field {
    Field { values: y.values.iter().enumerate().map(|(k, &v)| f(grid.point(k), v)).collect() }
}

/// Builds the network input `(y)` or `(x1, x2, y)`.
#[inline]
fn input(spatial: bool, pt: [f64; 2], y: f64) -> ([f64; 3], usize) {
    if spatial {
        ([pt[0], pt[1], y], 3)
    } else {
        ([y, 0.0, 0.0], 1)
    }
}

fn spatial_flag(net: &ReluNet) -> Result<bool> {
    match net.input_dim() {
        1 => Ok(false),
        3 => Ok(true),
        n => Err(Error::InvalidNetwork(format!("expected input dimension 1 or 3, got {n}"))),
    }
}

#[derive(Clone, Debug)]
pub struct NetModel {
    net: ReluNet,
    spatial: bool,
}

impl NetModel {
    pub fn new(net: ReluNet) -> Result<Self> {
        let spatial = spatial_flag(&net)?;
        Ok(Self { net, spatial })
    }

    pub fn net(&self) -> &ReluNet {
        &self.net
    }
}

impl Nonlinearity for NetModel {
    fn value(&self, pt: [f64; 2], y: f64) -> f64 {
        let (x, n) = input(self.spatial, pt, y);
        self.net.trace(&x[..n]).output
    }

    fn d0(&self, pt: [f64; 2], y: f64) -> f64 {
        let (x, n) = input(self.spatial, pt, y);
        self.net.weak_gradient_unchecked(&x[..n])[n - 1]
    }

    fn directional(&self, pt: [f64; 2], y: f64, h: f64) -> (f64, f64) {
        let (x, n) = input(self.spatial, pt, y);
        let trace = self.net.trace(&x[..n]);
        self.net.propagate_direction(&trace, h, relu_with_slope)
    }

    fn smoothed_directional(&self, pt: [f64; 2], y: f64, d: f64, fam: &SmoothingFamily) -> (f64, f64) {
        let (x, n) = input(self.spatial, pt, y);
        let trace = self.net.trace(&x[..n]);
        self.net.propagate_direction(&trace, d, |v| fam.value_and_derivative(v))
    }

    fn kink_distance(&self, pt: [f64; 2], y: f64) -> f64 {
        let (x, n) = input(self.spatial, pt, y);
        kink_distance_of(&self.net.trace(&x[..n]))
    }
}

/// The canonically smoothed network `𝒩_δ`, a C² nonlinearity without kinks.
#[derive(Clone, Debug)]
pub struct SmoothedNetModel {
    net: ReluNet,
    fam: SmoothingFamily,
    spatial: bool,
}

impl SmoothedNetModel {
    pub fn new(net: ReluNet, fam: SmoothingFamily) -> Result<Self> {
        let spatial = spatial_flag(&net)?;
        Ok(Self { net, fam, spatial })
    }

    pub fn family(&self) -> &SmoothingFamily {
        &self.fam
    }

    fn grad(&self, pt: [f64; 2], y: f64) -> f64 {
        let (x, n) = input(self.spatial, pt, y);
        smoothed_grad_unchecked(&self.net, &self.fam, &x[..n])[n - 1]
    }
}

impl Nonlinearity for SmoothedNetModel {
    fn value(&self, pt: [f64; 2], y: f64) -> f64 {
        let (x, n) = input(self.spatial, pt, y);
        self.net.forward_with(&x[..n], |v| self.fam.value(v)).output
    }

    fn d0(&self, pt: [f64; 2], y: f64) -> f64 {
        self.grad(pt, y)
    }

    fn directional(&self, pt: [f64; 2], y: f64, h: f64) -> (f64, f64) {
        let g = self.grad(pt, y);
        (g * h, g)
    }

    fn smoothed_directional(&self, pt: [f64; 2], y: f64, d: f64, _fam: &SmoothingFamily) -> (f64, f64) {
        self.directional(pt, y, d)
    }

    fn kink_distance(&self, _pt: [f64; 2], _y: f64) -> f64 {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_layer_network, NetKind};
    use crate::net::Layer;
    use crate::smoothing::SmoothingKind;

    #[test]
    fn net_model_agrees_with_network() {
        let net = two_layer_network(NetKind::Nonmonotone);
        let m = NetModel::new(net.clone()).unwrap();
        for y in [-3.0, 0.0, 6.0, 8.0] {
            assert_eq!(m.value([0.1, 0.2], y), net.value(&[y]));
            assert_eq!(m.d0([0.1, 0.2], y), net.weak_gradient_d0(&[y]).unwrap()[0]);
            assert_eq!(m.directional([0.0, 0.0], y, -1.0).0, net.directional_derivative(y, -1.0, &[]).unwrap());
        }
    }

    #[test]
    fn spatial_networks_see_coordinates() {
        // N(x1, x2, y) = max(x1 + y, 0)
        let net = ReluNet::new(vec![
            Layer::new(1, 3, vec![1.0, 0.0, 1.0], vec![0.0]).unwrap(),
            Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
        ])
        .unwrap();
        let m = NetModel::new(net).unwrap();
        assert_eq!(m.value([0.5, 0.0], 0.25), 0.75);
        assert_eq!(m.value([0.5, 0.0], -1.0), 0.0);
        assert_eq!(m.kink_distance([0.5, 0.0], -0.5), 0.0);
        let bad = ReluNet::new(vec![Layer::new(1, 2, vec![1.0, 1.0], vec![0.0]).unwrap()]).unwrap();
        assert!(NetModel::new(bad).is_err());
    }

    #[test]
    fn smoothed_model_has_no_kinks() {
        let fam = SmoothingFamily::new(SmoothingKind::PiecewisePolynomial, 0.1).unwrap();
        let m = SmoothedNetModel::new(ReluNet::relu(), fam).unwrap();
        assert_eq!(m.kink_distance([0.0, 0.0], 0.0), f64::INFINITY);
        assert_eq!(m.value([0.0, 0.0], 0.05), fam.value(0.05));
        assert_eq!(m.directional([0.0, 0.0], 0.05, 2.0), (2.0 * fam.derivative(0.05), fam.derivative(0.05)));
    }
}
