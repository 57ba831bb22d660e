//! Symmetric banded matrices and their Cholesky factors.
//!
//! Only the lower band is stored, row by row: entry `(i, j)` with
//! `i - bw <= j <= i` lives at `i * (bw + 1) + (j + bw - i)`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)` of the symmetric matrix; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` and, implicitly, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + lo - i;
            let mut acc = 0.0;
            for (k, j) in (lo..i).enumerate() {
                let a = row[off + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + row[self.bw] * x[i];
        }
        y
    }

    /// In-place band Cholesky `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in klo..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    self.data[i * w + bw] = s.sqrt();
                } else {
                    self.data[i * w + (j + bw - i)] = s / self.data[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bw;
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let r = i * w + bw - i;
            let mut s = x[i];
            for k in lo..i {
                s -= d[r + k] * x[k];
            }
            x[i] = s / d[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= d[i * w + bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            let r = i * w + bw - i;
            for k in lo..i {
                x[k] -= d[r + k] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Sparse matrix stored as per-row `(column, value)` lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    /// `self * self` for a symmetric matrix; rows come back sorted by column.
    pub fn square(&self) -> SparseRows {
        let n = self.rows.len();
        let mut acc = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                for &(k, a) in row {
                    for &(j, b) in &self.rows[k] {
                        if acc[j] == 0.0 && !touched.contains(&j) {
                            touched.push(j);
                        }
                        acc[j] += a * b;
                    }
                }
                touched.sort_unstable();
                let out = touched.iter().map(|&j| (j, std::mem::take(&mut acc[j]))).collect();
                touched.clear();
                out
            })
            .collect();
        SparseRows { rows }
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, row) in self.rows.iter_mut().enumerate() {
            match row.iter_mut().find(|(j, _)| *j == i) {
                Some(e) => e.1 += d[i],
                None => row.push((i, d[i])),
            }
        }
    }

    /// Lower band of a symmetric sparse matrix.
    pub fn to_band(&self) -> BandMatrix {
        let bw = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0);
        let mut band = BandMatrix::zeros(self.rows.len(), bw);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                if j <= i {
                    band.add(i, j, a);
                }
            }
        }
        band
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = tridiag(6);
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let sol = a.clone().cholesky().unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut a = tridiag(4);
        a.add(2, 2, -5.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sparse_square_matches_dense_product() {
        let n = 5;
        let band = tridiag(n);
        let rows = SparseRows {
            rows: (0..n)
                .map(|i| (0..n).filter(|&j| band.get(i, j) != 0.0).map(|j| (j, band.get(i, j))).collect())
                .collect(),
        };
        let sq = rows.square().to_band();
        assert_eq!(sq.bandwidth(), 2);
        for i in 0..n {
            for j in 0..n {
                let dense: f64 = (0..n).map(|k| band.get(i, k) * band.get(k, j)).sum();
                assert!((sq.get(i, j) - dense).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn random_spd_band_round_trip(
            n in 1usize..30,
            bw in 0usize..5,
            vals in proptest::collection::vec(-1.0f64..1.0, 200),
            x in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let mut a = BandMatrix::zeros(n, bw);
            let mut it = vals.iter().cycle();
            for i in 0..n {
                for j in i.saturating_sub(bw)..i {
                    a.add(i, j, *it.next().unwrap());
                }
                // Diagonal dominance.
                a.add(i, i, 2.0 * bw as f64 + 1.0);
            }
            let x = &x[..n];
            let b = a.matvec(x);
            let sol = a.cholesky().unwrap().solve(&b);
            for (s, e) in sol.iter().zip(x) {
                prop_assert!((s - e).abs() < 1e-12);
            }
        }
    }
}
