//! Compressed sparse row matrices and the kernels the solvers are built on.
//!
//! The storage is deliberately minimal: row offsets, column indices sorted
//! strictly increasing within each row, and values. Everything downstream
//! (assembly, factorizations, Krylov solvers) works against this one type.

pub mod band;
pub mod ict;
pub mod market;

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse row format.
///
/// Invariants, enforced on construction:
/// * `row_offsets.len() == nrows + 1`, non-decreasing, last entry `== nnz`,
/// * column indices strictly increasing within each row and `< ncols`,
/// * all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating the invariants above.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::DimensionMismatch(format!(
                "row offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::DimensionMismatch(
                "row offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch(
                "column index and value arrays differ in length".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::DimensionMismatch(format!(
                    "row offsets decrease at row {i}"
                )));
            }
            for k in lo..hi {
                if col_indices[k] >= ncols {
                    return Err(Error::DimensionMismatch(format!(
                        "column index {} out of bounds in row {i}",
                        col_indices[k]
                    )));
                }
                if k > lo && col_indices[k] <= col_indices[k - 1] {
                    return Err(Error::DimensionMismatch(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite matrix entry".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) out of bounds for {nrows}x{ncols}"
                )));
            }
            per_row[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut per_row {
            // Stable sort: duplicates are summed in insertion order, which
            // keeps symmetric assembly bitwise symmetric.
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == j {
                    sum += row[k].1;
                    k += 1;
                }
                col_indices.push(j);
                values.push(sum);
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(nrows, ncols, row_offsets, col_indices, values)
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of explicitly stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Stored entry at `(i, j)`, or zero when the position is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Sparse matrix-vector product `y = A x`, or `y = A^T x` with the
    /// `transposed` flag. The transposed product scatters row contributions
    /// so the matrix is traversed only once.
    pub fn spmv(&self, x: &[f64], transposed: bool) -> Result<Vec<f64>> {
        let (expect, out_len) = if transposed {
            (self.nrows, self.ncols)
        } else {
            (self.ncols, self.nrows)
        };
        if x.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "spmv: operand length {} does not match {}",
                x.len(),
                expect
            )));
        }
        let mut y = vec![0.0; out_len];
        if transposed {
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                let xi = x[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    y[j] += v * xi;
                }
            }
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                let (cols, vals) = self.row(i);
                *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
            }
        }
        Ok(y)
    }

    /// Convenience wrapper for the untransposed product, panicking on shape
    /// mismatch; use in contexts where dimensions are known correct.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.spmv(x, false).expect("spmv dimension mismatch")
    }

    /// Explicit transpose, still in CSR.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols];
        for &j in &self.col_indices {
            counts[j] += 1;
        }
        let mut row_offsets = vec![0usize; self.ncols + 1];
        for j in 0..self.ncols {
            row_offsets[j + 1] = row_offsets[j] + counts[j];
        }
        let mut cursor = row_offsets.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let dst = cursor[j];
                col_indices[dst] = i;
                values[dst] = v;
                cursor[j] += 1;
            }
        }
        // Rows of the transpose inherit the ascending row order of the
        // original traversal, so indices are already sorted.
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Maximum `|i - j|` over stored entries; zero for a diagonal matrix.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            for &j in cols {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    /// Whether `|A - A^T|` stays below `tol * max|A|` entrywise.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t = self.transpose();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if (v - t.get(i, j)).abs() > tol * scale.max(1.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Row-major dense copy; intended for small verification problems.
    pub fn to_dense(&self) -> crate::dense::DenseMatrix {
        let mut out = crate::dense::DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Scales every stored entry by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::dot;
    use proptest::prelude::*;

    #[test]
    fn identity_spmv_returns_input() {
        let a = SparseMatrix::identity(4);
        let x = vec![1.0, -2.0, 3.5, 0.0];
        assert_eq!(a.spmv(&x, false).unwrap(), x);
        assert_eq!(a.spmv(&x, true).unwrap(), x);
    }

    #[test]
    fn small_spmv_worked_example() {
        // [[2, 0], [1, 3]] * (1, 1) = (2, 4)
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0], false).unwrap(), vec![2.0, 4.0]);
        // transposed: [[2, 1], [0, 3]] * (1, 1) = (3, 3)
        assert_eq!(a.spmv(&[1.0, 1.0], true).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a =
            SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_malformed_csr() {
        assert!(SparseMatrix::from_csr(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(
            SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 1], vec![1.0, 2.0]).is_err(),
            "duplicate column index must be rejected"
        );
        assert!(SparseMatrix::from_csr(1, 1, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn spmv_dimension_mismatch_is_an_error() {
        let a = SparseMatrix::identity(3);
        assert!(a.spmv(&[1.0, 2.0], false).is_err());
    }

    #[test]
    fn empty_rows_round_trip() {
        let a = SparseMatrix::from_triplets(3, 3, &[(2, 0, 4.0)]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0, 1.0], false).unwrap(), vec![0.0, 0.0, 4.0]);
        assert_eq!(a.transpose().get(0, 2), 4.0);
    }

    /// Random sparse matrix strategy for the property checks below.
    fn arb_matrix(n: usize) -> impl Strategy<Value = SparseMatrix> {
        proptest::collection::vec(
            (0..n, 0..n, proptest::num::f64::NORMAL.prop_map(|v| v % 10.0)),
            0..4 * n,
        )
        .prop_map(move |t| SparseMatrix::from_triplets(n, n, &t).unwrap())
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(proptest::num::f64::NORMAL.prop_map(|v| v % 10.0), n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// spmv is linear: A(ax + y) = a Ax + Ay.
        #[test]
        fn spmv_linearity(a in arb_matrix(7), x in arb_vec(7), y in arb_vec(7),
                          alpha in -10.0f64..10.0) {
            let combined: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| alpha * xi + yi).collect();
            let lhs = a.spmv(&combined, false).unwrap();
            let ax = a.spmv(&x, false).unwrap();
            let ay = a.spmv(&y, false).unwrap();
            let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..7 {
                prop_assert!((lhs[i] - (alpha * ax[i] + ay[i])).abs() <= 1e-12 * scale);
            }
        }

        /// Adjoint identity: <Ax, y> = <x, A^T y>.
        #[test]
        fn spmv_transpose_adjoint(a in arb_matrix(7), x in arb_vec(7), y in arb_vec(7)) {
            let ax = a.spmv(&x, false).unwrap();
            let aty = a.spmv(&y, true).unwrap();
            let lhs = dot(&ax, &y);
            let rhs = dot(&x, &aty);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        /// Explicit transpose agrees with the transposed product.
        #[test]
        fn transpose_consistent_with_flag(a in arb_matrix(6), x in arb_vec(6)) {
            let via_flag = a.spmv(&x, true).unwrap();
            let via_transpose = a.transpose().spmv(&x, false).unwrap();
            for i in 0..6 {
                prop_assert!((via_flag[i] - via_transpose[i]).abs() <= 1e-13 * via_flag[i].abs().max(1.0));
            }
        }
    }
}
