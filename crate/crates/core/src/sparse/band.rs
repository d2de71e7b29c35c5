//! Exact Cholesky factorization for banded symmetric positive definite
//! matrices.
//!
//! The grid orderings used by the assembly keep every matrix banded with a
//! small bandwidth, so the factor is computed row by row with a dense window
//! per row: all fill stays inside the band, and the cost is
//! `O(n * bandwidth^2)`.

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: SparseMatrix,
    /// `L^T`, kept so the backward sweep can also run row-oriented.
    upper: SparseMatrix,
    bandwidth: usize,
}

impl CholeskyFactor {
    /// The factor `L`, band-stored: every in-band lower position is present.
    pub fn lower(&self) -> &SparseMatrix {
        &self.lower
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn order(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A x = b` via forward and backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_lower(b)?;
        self.solve_lower_transposed(&y)
    }

    /// Solves the triangular system `L y = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky solve: rhs length {} does not match order {n}",
                b.len()
            )));
        }
        let mut x = b.to_vec();
        // Row entries are sorted, diagonal last.
        for i in 0..n {
            let (cols, vals) = self.lower.row(i);
            let mut s = x[i];
            for (&j, &v) in cols.iter().zip(vals).take(cols.len() - 1) {
                s -= v * x[j];
            }
            x[i] = s / vals[cols.len() - 1];
        }
        Ok(x)
    }

    /// Solves the triangular system `L^T x = b` (backward substitution).
    pub fn solve_lower_transposed(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky solve: rhs length {} does not match order {n}",
                b.len()
            )));
        }
        let mut x = b.to_vec();
        // Rows of the transpose start at the diagonal.
        for i in (0..n).rev() {
            let (cols, vals) = self.upper.row(i);
            let mut s = x[i];
            for (&j, &v) in cols.iter().zip(vals).skip(1) {
                s -= v * x[j];
            }
            x[i] = s / vals[0];
        }
        Ok(x)
    }

    /// Solves `A^T x = b`. The factorization requires a symmetric input, so
    /// this coincides with [`solve`](Self::solve); it exists because callers
    /// track the transposed role explicitly.
    pub fn solve_transposed(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve(b)
    }
}

/// Factors a banded symmetric positive definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] on the first non-positive pivot
/// and with a configuration error when the input is not symmetric.
pub fn band_cholesky(a: &SparseMatrix) -> Result<CholeskyFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky: matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::Config(
            "cholesky requires a symmetric matrix".into(),
        ));
    }
    let n = a.nrows();
    let bw = a.bandwidth();
    // rows[i] holds L(i, lo..=i) densely, lo = max(i - bw, 0).
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        let mut ri = vec![0.0; i - lo + 1];
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                ri[j - lo] = v;
            }
        }
        for j in lo..i {
            let lo_j = j.saturating_sub(bw);
            let mut s = ri[j - lo];
            for k in lo.max(lo_j)..j {
                s -= ri[k - lo] * rows[j][k - lo_j];
            }
            ri[j - lo] = s / rows[j][j - lo_j];
        }
        let mut s = ri[i - lo];
        for k in lo..i {
            s -= ri[k - lo] * ri[k - lo];
        }
        if s <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: i, value: s });
        }
        ri[i - lo] = s.sqrt();
        rows.push(ri);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for (i, ri) in rows.iter().enumerate() {
        let lo = i.saturating_sub(bw);
        for (k, &v) in ri.iter().enumerate() {
            col_indices.push(lo + k);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    let lower = SparseMatrix::from_csr(n, n, row_offsets, col_indices, values)?;
    let upper = lower.transpose();
    Ok(CholeskyFactor {
        lower,
        upper,
        bandwidth: bw,
    })
}
