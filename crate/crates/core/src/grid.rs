//! Uniform rectangular grids, grid functions and the five-point Laplacian.
//!
//! Unknowns live on interior nodes only; the homogeneous Dirichlet boundary
//! is eliminated. Fields are stored row-major with `x` varying fastest. For
//! the banded factorizations the nodes are renumbered so that the shorter
//! side of the grid is the fast index, which keeps the bandwidth minimal.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::banded::{BandCholesky, BandMatrix, SparseRows};
use crate::error::{Error, Result};

#[derive(Debug, Default)]
struct GridCache {
    laplacian: OnceLock<BandCholesky>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    nx: usize,
    ny: usize,
    #[serde(skip)]
    cache: Arc<GridCache>,
}

impl PartialEq for Grid {
    fn eq(&self, o: &Self) -> bool {
        (self.ax, self.bx, self.ay, self.by, self.nx, self.ny) == (o.ax, o.bx, o.ay, o.by, o.nx, o.ny)
    }
}

impl Grid {
    pub fn new(ax: f64, bx: f64, ay: f64, by: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(bx > ax) || !(by > ay) || ![ax, bx, ay, by].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid(format!("empty domain ({ax},{bx})x({ay},{by})")));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 interior nodes, got {nx}x{ny}")));
        }
        Ok(Self { ax, bx, ay, by, nx, ny, cache: Arc::default() })
    }

    /// Square domain `(a, b)²` with mesh size `dx`, which must divide `b - a`.
    pub fn square(a: f64, b: f64, dx: f64) -> Result<Self> {
        let cells = (b - a) / dx;
        let n = cells.round();
        if !(dx > 0.0) || (cells - n).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!("mesh size {dx} does not divide ({a},{b})")));
        }
        let n = n as usize;
        Self::new(a, b, a, b, n.saturating_sub(1), n.saturating_sub(1))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        (self.bx - self.ax) / (self.nx + 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.by - self.ay) / (self.ny + 1) as f64
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.ax, self.bx, self.ay, self.by)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Coordinates of interior node `k`.
    #[inline]
    pub fn point(&self, k: usize) -> [f64; 2] {
        let (ix, iy) = (k % self.nx, k / self.nx);
        [self.ax + (ix + 1) as f64 * self.hx(), self.ay + (iy + 1) as f64 * self.hy()]
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    /// Position of node `k` in the band ordering.
    #[inline]
    fn band_index(&self, k: usize) -> usize {
        if self.nx <= self.ny {
            k
        } else {
            let (ix, iy) = (k % self.nx, k / self.nx);
            ix * self.ny + iy
        }
    }

    pub(crate) fn to_band_order(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, &x) in v.iter().enumerate() {
            out[self.band_index(k)] = x;
        }
        out
    }

    pub(crate) fn to_natural_order(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|k| v[self.band_index(k)]).collect()
    }

    /// `-Δ_h + diag(c)` as sparse rows in band ordering.
    pub(crate) fn operator_rows(&self, c: &[f64]) -> SparseRows {
        let (nx, ny) = (self.nx, self.ny);
        let (wx, wy) = (1.0 / (self.hx() * self.hx()), 1.0 / (self.hy() * self.hy()));
        let mut rows = vec![Vec::with_capacity(5); self.len()];
        for iy in 0..ny {
            for ix in 0..nx {
                let k = self.index(ix, iy);
                let row = &mut rows[self.band_index(k)];
                if iy > 0 {
                    row.push((self.band_index(k - nx), -wy));
                }
                if ix > 0 {
                    row.push((self.band_index(k - 1), -wx));
                }
                row.push((self.band_index(k), 2.0 * wx + 2.0 * wy + c[k]));
                if ix + 1 < nx {
                    row.push((self.band_index(k + 1), -wx));
                }
                if iy + 1 < ny {
                    row.push((self.band_index(k + nx), -wy));
                }
                row.sort_unstable_by_key(|e| e.0);
            }
        }
        SparseRows { rows }
    }

    fn laplacian_factor(&self) -> &BandCholesky {
        self.cache.laplacian.get_or_init(|| {
            self.operator_rows(&vec![0.0; self.len()])
                .to_band()
                .cholesky()
                .expect("the discrete Dirichlet Laplacian is positive definite")
        })
    }

    /// `(-Δ_h)⁻¹ r`.
    pub fn poisson_solve(&self, r: &Field) -> Result<Field> {
        self.check(r)?;
        let mut v = self.to_band_order(&r.values);
        self.laplacian_factor().solve_in_place(&mut v);
        Ok(Field { values: self.to_natural_order(&v) })
    }

    pub(crate) fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::ShapeMismatch { expected: self.len(), got: f.len() });
        }
        Ok(())
    }

    /// Largest Poincaré constant `C_P` with `‖v‖ ≤ C_P ‖∇_h v‖`, from the smallest discrete eigenvalue.
    pub fn poincare_constant(&self) -> f64 {
        let lx = 4.0 / (self.hx() * self.hx())
            * (std::f64::consts::PI * self.hx() / (2.0 * (self.bx - self.ax))).sin().powi(2);
        let ly = 4.0 / (self.hy() * self.hy())
            * (std::f64::consts::PI * self.hy() / (2.0 * (self.by - self.ay))).sin().powi(2);
        1.0 / (lx + ly).sqrt()
    }
}

/// A grid function on the interior nodes, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        Self { values: vec![v; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self { values: grid.points().map(|[x, y]| f(x, y)).collect() }
    }

    pub fn from_vec(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let f = Self { values };
        grid.check(&f)?;
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.len(), other.len(), "field length");
        Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_csv(&self, grid: &Grid) -> Result<String> {
        grid.check(self)?;
        let mut s = String::new();
        let (ax, bx, ay, by) = grid.bounds();
        let _ = writeln!(s, "# grid ax={ax:e} bx={bx:e} ay={ay:e} by={by:e} nx={} ny={}", grid.nx(), grid.ny());
        s.push_str("ix,iy,x,y,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let [x, y] = grid.point(k);
            let _ = writeln!(s, "{},{},{x:e},{y:e},{v:e}", k % grid.nx(), k / grid.nx());
        }
        Ok(s)
    }

    pub fn write_csv(&self, grid: &Grid, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv(grid)?.as_bytes())?;
        Ok(())
    }

    /// Parses the CSV produced by [`Field::to_csv`], returning the grid as well.
    pub fn read_csv(r: impl BufRead) -> Result<(Grid, Field)> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
        let meta = header.strip_prefix("# grid").ok_or_else(|| Error::Parse("missing grid header".into()))?;
        let get = |key: &str| -> Result<String> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("missing {key} in header")))
        };
        let num = |s: String| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let int = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let grid = Grid::new(
            num(get("ax")?)?,
            num(get("bx")?)?,
            num(get("ay")?)?,
            num(get("by")?)?,
            int(get("nx")?)?,
            int(get("ny")?)?,
        )?;
        let mut values = vec![f64::NAN; grid.len()];
        for line in lines {
            let line = line?;
            if line.is_empty() || line.starts_with("ix") || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!("bad row: {line}")));
            }
            let ix = int(cols[0].to_string())?;
            let iy = int(cols[1].to_string())?;
            if ix >= grid.nx() || iy >= grid.ny() {
                return Err(Error::Parse(format!("node ({ix},{iy}) outside grid")));
            }
            values[grid.index(ix, iy)] = num(cols[4].to_string())?;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse("missing nodes".into()));
        }
        Ok((grid, Field { values }))
    }
}

/// `-Δ_h y` with zero ghost values.
pub fn laplacian_apply(grid: &Grid, y: &Field) -> Result<Field> {
    grid.check(y)?;
    Ok(Field { values: stencil_apply(grid, &y.values, None) })
}

fn stencil_apply(grid: &Grid, y: &[f64], c: Option<&[f64]>) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (wx, wy) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let mut out = vec![0.0; y.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let l = if ix > 0 { y[k - 1] } else { 0.0 };
            let r = if ix + 1 < nx { y[k + 1] } else { 0.0 };
            let d = if iy > 0 { y[k - nx] } else { 0.0 };
            let u = if iy + 1 < ny { y[k + nx] } else { 0.0 };
            let mut v = wx * (2.0 * y[k] - l - r) + wy * (2.0 * y[k] - d - u);
            if let Some(c) = c {
                v += c[k] * y[k];
            }
            out[k] = v;
        }
    }
    out
}

/// `-Δ_h + diag(c)` together with a lazily computed banded Cholesky factor.
#[derive(Debug)]
pub struct EllipticOp {
    grid: Grid,
    coeff: Vec<f64>,
    factor: OnceLock<std::result::Result<BandCholesky, (usize, f64)>>,
}

pub fn assemble(grid: &Grid, c: &Field) -> Result<EllipticOp> {
    grid.check(c)?;
    Ok(EllipticOp { grid: grid.clone(), coeff: c.values.clone(), factor: OnceLock::new() })
}

impl EllipticOp {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficient(&self) -> &[f64] {
        &self.coeff
    }

    pub fn apply(&self, y: &Field) -> Result<Field> {
        self.grid.check(y)?;
        Ok(Field { values: stencil_apply(&self.grid, &y.values, Some(&self.coeff)) })
    }

    /// Assembled matrix in band ordering.
    pub fn band_matrix(&self) -> BandMatrix {
        self.grid.operator_rows(&self.coeff).to_band()
    }

    pub(crate) fn sparse_rows(&self) -> SparseRows {
        self.grid.operator_rows(&self.coeff)
    }

    fn factor(&self) -> Result<&BandCholesky> {
        self.factor
            .get_or_init(|| {
                self.band_matrix().cholesky().map_err(|e| match e {
                    Error::NotPositiveDefinite { row, pivot } => (row, pivot),
                    _ => (0, f64::NAN),
                })
            })
            .as_ref()
            .map_err(|&(row, pivot)| Error::NotPositiveDefinite { row, pivot })
    }

    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        self.grid.check(rhs)?;
        let f = self.factor()?;
        let mut v = self.grid.to_band_order(&rhs.values);
        f.solve_in_place(&mut v);
        Ok(Field { values: self.grid.to_natural_order(&v) })
    }
}

pub fn solve_linear(op: &EllipticOp, rhs: &Field) -> Result<Field> {
    op.solve(rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualMode {
    L2,
    Hminus1,
}

pub fn inner(grid: &Grid, a: &Field, b: &Field) -> Result<f64> {
    grid.check(a)?;
    grid.check(b)?;
    Ok(inner_unchecked(grid, &a.values, &b.values))
}

pub(crate) fn inner_unchecked(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_area() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub fn norm_l2(grid: &Grid, a: &Field) -> Result<f64> {
    Ok(inner(grid, a, a)?.sqrt())
}

/// Discrete `H¹` norm with forward differences, boundary ghosts included.
pub fn norm_h1(grid: &Grid, a: &Field) -> Result<f64> {
    grid.check(a)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let v = &a.values;
    let at = |ix: isize, iy: isize| {
        if ix < 0 || iy < 0 || ix >= nx as isize || iy >= ny as isize {
            0.0
        } else {
            v[iy as usize * nx + ix as usize]
        }
    };
    let mut grad = 0.0;
    for iy in -1..ny as isize {
        for ix in -1..nx as isize {
            let c = at(ix, iy);
            if iy >= 0 {
                grad += ((at(ix + 1, iy) - c) / grid.hx()).powi(2);
            }
            if ix >= 0 {
                grad += ((at(ix, iy + 1) - c) / grid.hy()).powi(2);
            }
        }
    }
    Ok((norm_l2(grid, a)?.powi(2) + grad * grid.cell_area()).sqrt())
}

pub fn residual_norm(grid: &Grid, r: &Field, mode: ResidualMode) -> Result<f64> {
    grid.check(r)?;
    Ok(match mode {
        ResidualMode::L2 => norm_l2(grid, r)?,
        ResidualMode::Hminus1 => {
            let w = grid.poisson_solve(r)?;
            inner(grid, &w, r)?.max(0.0).sqrt()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sinsin(x: f64, y: f64) -> f64 {
        (PI * x).sin() * (PI * y).sin()
    }

    #[test]
    fn grid_spacing() {
        let g = Grid::square(0.0, 1.0, 1.0 / 32.0).unwrap();
        assert_eq!(g.nx(), 31);
        assert!((g.hx() - 1.0 / 32.0).abs() < 1e-15);
        assert!(Grid::new(0.0, 1.0, 0.0, 1.0, 1, 4).is_err());
        assert!(Grid::square(0.0, 1.0, 0.3).is_err());
        let g = Grid::square(0.0, 2.0, 1.0 / 16.0).unwrap();
        assert_eq!(g.nx(), 31);
    }

    #[test]
    fn laplacian_of_constant() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 6, 5).unwrap();
        let l = laplacian_apply(&g, &Field::constant(&g, 1.0)).unwrap();
        for (k, v) in l.values.iter().enumerate() {
            let (ix, iy) = (k % 6, k / 6);
            let boundary = ix == 0 || iy == 0 || ix == 5 || iy == 4;
            if boundary {
                assert!(*v > 0.0);
            } else {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn assembled_operator_diagonal_and_row_sums() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 7, 7).unwrap();
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let a = op.band_matrix();
        let h2 = g.hx() * g.hx();
        for i in 0..g.len() {
            assert!((a.get(i, i) - 4.0 / h2).abs() < 1e-9);
            let row: f64 = (0..g.len()).map(|j| a.get(i, j)).sum();
            assert!(row >= -1e-9);
        }
    }

    #[test]
    fn stencil_truncation_is_second_order() {
        let err = |n: usize| {
            let g = Grid::new(0.0, 1.0, 0.0, 1.0, n, n).unwrap();
            let y = Field::from_fn(&g, sinsin);
            let l = laplacian_apply(&g, &y).unwrap();
            l.axpy(-2.0 * PI * PI, &y).max_abs()
        };
        let ratio = err(15) / err(31);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn manufactured_poisson_solves() {
        let mut prev = None;
        for n in [15, 31, 63] {
            let g = Grid::new(0.0, 1.0, 0.0, 1.0, n, n).unwrap();
            let exact = Field::from_fn(&g, sinsin);
            let rhs = exact.scale(2.0 * PI * PI);
            let d = solve_linear(&assemble(&g, &Field::zeros(&g)).unwrap(), &rhs).unwrap();
            let rhs1 = exact.scale(2.0 * PI * PI + 1.0);
            let d1 = solve_linear(&assemble(&g, &Field::constant(&g, 1.0)).unwrap(), &rhs1).unwrap();
            let e = norm_l2(&g, &d.sub(&exact)).unwrap();
            let e1 = norm_l2(&g, &d1.sub(&exact)).unwrap();
            assert!(e < 0.01 && e1 < 0.01);
            if let Some(p) = prev {
                let r: f64 = p / e;
                assert!((3.5..4.5).contains(&r), "{r}");
            }
            prev = Some(e);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Grid::new(0.0, 1.0, 0.0, 2.0, 5, 9).unwrap();
        let d = solve_linear(&assemble(&g, &Field::constant(&g, 3.0)).unwrap(), &Field::zeros(&g)).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn solve_residual_small_on_anisotropic_grid() {
        // nx > ny exercises the reordering.
        let g = Grid::new(0.0, 3.0, 0.0, 1.0, 20, 7).unwrap();
        let c = Field::from_fn(&g, |x, y| 1.0 + x * y);
        let op = assemble(&g, &c).unwrap();
        let rhs = Field::from_fn(&g, |x, y| (x - y).cos());
        let d = op.solve(&rhs).unwrap();
        let r = op.apply(&d).unwrap().sub(&rhs);
        assert!(norm_l2(&g, &r).unwrap() <= 1e-12 * (1.0 + norm_l2(&g, &rhs).unwrap()));
        assert_eq!(op.band_matrix().bandwidth(), 7);
    }

    #[test]
    fn indefinite_operator_reports_breakdown() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 8, 8).unwrap();
        let op = assemble(&g, &Field::constant(&g, -100.0)).unwrap();
        assert!(matches!(op.solve(&Field::constant(&g, 1.0)), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn norms_converge_to_integrals() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 127, 127).unwrap();
        let one = norm_l2(&g, &Field::constant(&g, 1.0)).unwrap();
        assert!((one - 1.0).abs() < 0.02);
        let s = norm_l2(&g, &Field::from_fn(&g, sinsin)).unwrap();
        assert!((s - 0.5).abs() < 1e-3);
        // |∇ sin sin|² integrates to π²/2.
        let h1 = norm_h1(&g, &Field::from_fn(&g, sinsin)).unwrap();
        assert!((h1 * h1 - (0.25 + PI * PI / 2.0)).abs() < 1e-2);
        let z = Field::zeros(&g);
        assert_eq!(residual_norm(&g, &z, ResidualMode::L2).unwrap(), 0.0);
        assert_eq!(residual_norm(&g, &z, ResidualMode::Hminus1).unwrap(), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(-1.0, 1.0, 0.0, 0.5, 4, 3).unwrap();
        let f = Field::from_fn(&g, |x, y| x * 1e-3 + y.exp() / 3.0);
        let text = f.to_csv(&g).unwrap();
        let (g2, f2) = Field::read_csv(text.as_bytes()).unwrap();
        assert_eq!(g2, g);
        assert_eq!(f2, f);
        assert!(Field::read_csv("ix,iy\n".as_bytes()).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
        let bad = Field { values: vec![0.0; 3] };
        assert!(matches!(laplacian_apply(&g, &bad), Err(Error::ShapeMismatch { .. })));
        assert!(inner(&g, &bad, &bad).is_err());
    }

    fn arb_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn operator_is_symmetric(a in arb_field(30), b in arb_field(30), c in arb_field(30)) {
            let g = Grid::new(0.0, 1.0, 0.0, 2.0, 6, 5).unwrap();
            let op = assemble(&g, &Field { values: c.iter().map(|v| v + 1.0).collect() }).unwrap();
            let (a, b) = (Field { values: a }, Field { values: b });
            let l = inner(&g, &op.apply(&a).unwrap(), &b).unwrap();
            let r = inner(&g, &a, &op.apply(&b).unwrap()).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
        }

        #[test]
        fn maximum_principle(rhs in arb_field(36), c in arb_field(36)) {
            let g = Grid::new(0.0, 1.0, 0.0, 1.0, 6, 6).unwrap();
            let op = assemble(&g, &Field { values: c.iter().map(|v| v.abs() * 10.0).collect() }).unwrap();
            let y = op.solve(&Field { values: rhs.iter().map(|v| v.abs()).collect() }).unwrap();
            prop_assert!(y.values.iter().all(|&v| v >= -1e-12));
        }

        #[test]
        fn hminus1_bounded_by_poincare_times_l2(r in arb_field(49)) {
            let g = Grid::new(0.0, 1.0, 0.0, 1.0, 7, 7).unwrap();
            let r = Field { values: r };
            let h = residual_norm(&g, &r, ResidualMode::Hminus1).unwrap();
            let l = residual_norm(&g, &r, ResidualMode::L2).unwrap();
            prop_assert!(h <= g.poincare_constant() * l * (1.0 + 1e-10));
        }
    }
}
