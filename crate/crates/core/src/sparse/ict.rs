//! Incomplete Cholesky factorization with threshold dropping.
//!
//! Used as the preconditioner for the inner conjugate-gradient sub-solves.
//! The factor is built column by column inside the band profile of the
//! input; a computed entry `L(i,j)` is discarded when
//! `|L(i,j)| < tau * ||A(:,j)||_2`, the diagonal is always kept. A breakdown
//! (non-positive pivot) is retried on the shifted matrix `A + sigma*diag(A)`
//! with `sigma` starting at 1e-3 and doubling, up to ten times.

use super::SparseMatrix;
use crate::error::{Error, Result};

const INITIAL_SHIFT: f64 = 1e-3;
const MAX_RETRIES: usize = 10;

/// Lower-triangular incomplete factor `L` with `A ~ L L^T`.
#[derive(Debug, Clone)]
pub struct IncompleteCholeskyFactor {
    lower: SparseMatrix,
    upper: SparseMatrix,
    drop_tolerance: f64,
    /// Diagonal shift that was needed to complete the factorization; zero in
    /// the usual case.
    shift: f64,
}

impl IncompleteCholeskyFactor {
    pub fn lower(&self) -> &SparseMatrix {
        &self.lower
    }

    pub fn drop_tolerance(&self) -> f64 {
        self.drop_tolerance
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn order(&self) -> usize {
        self.lower.nrows()
    }

    /// Applies `(L L^T)^{-1}` by forward and backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "incomplete cholesky solve: rhs length {} does not match order {n}",
                b.len()
            )));
        }
        let mut x = b.to_vec();
        for i in 0..n {
            let (cols, vals) = self.lower.row(i);
            let mut s = x[i];
            for (&j, &v) in cols.iter().zip(vals).take(cols.len() - 1) {
                s -= v * x[j];
            }
            x[i] = s / vals[cols.len() - 1];
        }
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
}

/// Computes the threshold incomplete Cholesky factor of a banded symmetric
/// positive definite matrix.
pub fn ict_factor(a: &SparseMatrix, tau: f64) -> Result<IncompleteCholeskyFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "incomplete cholesky: matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("drop tolerance {tau} must be >= 0")));
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::Config(
            "incomplete cholesky requires a symmetric matrix".into(),
        ));
    }
    // Full 2-norm of each column of the original matrix drives the drop rule,
    // independent of any later diagonal shift.
    let n = a.nrows();
    let mut col_norms = vec![0.0f64; n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            col_norms[j] += v * v;
        }
    }
    for c in &mut col_norms {
        *c = c.sqrt();
    }

    let mut shift = 0.0;
    for retry in 0..=MAX_RETRIES {
        match try_factor(a, tau, &col_norms, shift) {
            Ok((lower, upper)) => {
                return Ok(IncompleteCholeskyFactor {
                    lower,
                    upper,
                    drop_tolerance: tau,
                    shift,
                });
            }
            Err(_) if retry < MAX_RETRIES => {
                shift = if shift == 0.0 {
                    INITIAL_SHIFT
                } else {
                    2.0 * shift
                };
            }
            Err(_) => {
                return Err(Error::FactorizationBreakdown {
                    retries: MAX_RETRIES,
                    shift,
                })
            }
        }
    }
    unreachable!("retry loop always returns");
}

/// Single left-looking pass over `A + shift*diag(A)`; inner error means
/// breakdown.
fn try_factor(
    a: &SparseMatrix,
    tau: f64,
    col_norms: &[f64],
    shift: f64,
) -> std::result::Result<(SparseMatrix, SparseMatrix), ()> {
    let n = a.nrows();
    let bw = a.bandwidth();
    // Kept entries per column, rows ascending with the diagonal first.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    // Dense scratch for the active column segment, rows j..=j+bw.
    let mut w = vec![0.0f64; bw + 1];
    for j in 0..n {
        let hi = (j + bw).min(n - 1);
        w[..=hi - j].fill(0.0);
        let (cols_j, vals_j) = a.row(j);
        for (&i, &v) in cols_j.iter().zip(vals_j) {
            // CSR row of a symmetric matrix doubles as its column.
            if i >= j {
                w[i - j] = v;
            }
        }
        w[0] += shift * a.get(j, j);
        // Left-looking update from every earlier column that reaches row j.
        for k in j.saturating_sub(bw)..j {
            let col_k = &columns[k];
            let ljk = match col_k.binary_search_by_key(&j, |&(r, _)| r) {
                Ok(pos) => col_k[pos].1,
                Err(_) => continue,
            };
            for &(r, v) in col_k.iter() {
                if r >= j {
                    w[r - j] -= ljk * v;
                }
            }
        }
        let pivot = w[0];
        if pivot <= 0.0 {
            return Err(());
        }
        let diag = pivot.sqrt();
        let kept = &mut columns[j];
        kept.push((j, diag));
        for r in j + 1..=hi {
            let v = w[r - j] / diag;
            if v != 0.0 && v.abs() >= tau * col_norms[j] {
                kept.push((r, v));
            }
        }
    }
    // Columns, rows ascending, are exactly the rows of the transpose.
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for col in &columns {
        for &(r, v) in col {
            col_indices.push(r);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    let upper = SparseMatrix::from_csr(n, n, row_offsets, col_indices, values).map_err(|_| ())?;
    let lower = upper.transpose();
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::band::band_cholesky;

    fn spd_band_matrix(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + (i % 3) as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 3 < n {
                t.push((i, i + 3, -0.5));
                t.push((i + 3, i, -0.5));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn zero_threshold_matches_exact_factor() {
        let a = spd_band_matrix(20);
        let exact = band_cholesky(&a).unwrap();
        let inc = ict_factor(&a, 0.0).unwrap();
        assert_eq!(inc.shift(), 0.0);
        for i in 0..20 {
            for j in 0..=i {
                let e = exact.lower().get(i, j);
                let g = inc.lower().get(i, j);
                assert!(
                    (e - g).abs() <= 1e-13 * e.abs().max(1.0),
                    "entry ({i}, {j}): exact {e}, incomplete {g}"
                );
            }
        }
    }

    #[test]
    fn huge_threshold_keeps_only_the_diagonal() {
        let a = spd_band_matrix(12);
        let inc = ict_factor(&a, 10.0).unwrap();
        assert_eq!(inc.lower().nnz(), 12);
        for i in 0..12 {
            let expect = a.get(i, i).sqrt();
            assert!((inc.lower().get(i, i) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn factor_of_identity_is_identity() {
        let a = SparseMatrix::identity(5);
        let inc = ict_factor(&a, 0.5).unwrap();
        assert_eq!(inc.lower(), &SparseMatrix::identity(5));
        assert_eq!(inc.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn sparsity_stays_inside_the_band() {
        let a = spd_band_matrix(30);
        let bw = a.bandwidth();
        let inc = ict_factor(&a, 0.05).unwrap();
        for i in 0..30 {
            let (cols, _) = inc.lower().row(i);
            for &j in cols {
                assert!(j <= i && i - j <= bw);
            }
        }
    }

    #[test]
    fn breakdown_recovers_with_diagonal_shift() {
        // Symmetric, diagonally weak: exact Cholesky breaks down, the shifted
        // retry must succeed and record the shift it used.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 1.0),
                (0, 1, 1.2),
                (1, 0, 1.2),
                (1, 1, 1.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        assert!(band_cholesky(&a).is_err());
        let inc = ict_factor(&a, 0.0).unwrap();
        assert!(inc.shift() > 0.0);
        // The produced factor solves *some* SPD system; just check finiteness.
        let x = inc.solve(&[1.0, 1.0, 1.0]).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
