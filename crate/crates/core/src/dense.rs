//! Dense matrices for the verification paths.
//!
//! The production solvers never materialize dense operators; this module
//! backs the spectral checks (cyclic Jacobi eigensolver, rank certification
//! by pivoted elimination) and the small-problem oracles. Sizes stay in the
//! low thousands, so simple `O(n^3)` algorithms are appropriate.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self {
            nrows,
            ncols,
            data: rows.concat(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.nrows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    /// Copies `block` into this matrix with its upper-left corner at
    /// `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        assert!(r0 + block.nrows <= self.nrows && c0 + block.ncols <= self.ncols);
        for i in 0..block.nrows {
            for j in 0..block.ncols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= alpha;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.nrows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns of `V`, so `A V = V diag(values)`. Sweeps run
/// until the off-diagonal Frobenius mass falls below `1e-14` times the norm
/// of the matrix.
pub fn jacobi_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows, a.ncols
        )));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::Config(
            "jacobi eigensolver requires a symmetric matrix".into(),
        ));
    }
    let n = a.nrows;
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    if n <= 1 {
        return Ok((m.data.clone(), v));
    }
    let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= 1e-14 * norm {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Rotation angle from the classic stable formulas.
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    m[(i, p)] = c * aip - s * aiq;
                    m[(p, i)] = m[(i, p)];
                    m[(i, q)] = s * aip + c * aiq;
                    m[(q, i)] = m[(i, q)];
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    if !converged {
        // One final check: sweeps may have just reached the target.
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        if (2.0 * s).sqrt() > 1e-14 * norm {
            return Err(Error::Verification(format!(
                "jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    Ok((values, vectors))
}

/// Numerical rank by Gaussian elimination with column pivoting (the pivot
/// column is chosen by largest remaining entry, with a row swap to bring
/// that entry to the diagonal). A pivot counts while it stays above
/// `rel_tol` times the first pivot.
pub fn rank_by_elimination(a: &DenseMatrix, rel_tol: f64) -> usize {
    let mut m = a.clone();
    let steps = m.nrows.min(m.ncols);
    let mut rank = 0;
    let mut first_pivot = 0.0f64;
    for step in 0..steps {
        let mut best = (step, step, 0.0f64);
        for j in step..m.ncols {
            for i in step..m.nrows {
                let v = m[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        let (pi, pj, pmax) = best;
        if step == 0 {
            first_pivot = pmax;
        }
        if pmax <= rel_tol * first_pivot || pmax == 0.0 {
            break;
        }
        if pi != step {
            for j in 0..m.ncols {
                let tmp = m[(step, j)];
                m[(step, j)] = m[(pi, j)];
                m[(pi, j)] = tmp;
            }
        }
        if pj != step {
            for i in 0..m.nrows {
                let tmp = m[(i, step)];
                m[(i, step)] = m[(i, pj)];
                m[(i, pj)] = tmp;
            }
        }
        rank += 1;
        let pivot = m[(step, step)];
        for i in step + 1..m.nrows {
            let f = m[(i, step)] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in step..m.ncols {
                let upd = f * m[(step, j)];
                m[(i, j)] -= upd;
            }
        }
    }
    rank
}
