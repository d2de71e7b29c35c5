//! The 3x3-block saddle-point operator of the discretized control problem.
//!
//! With mass matrix `M`, stiffness matrix `K` and regularization `beta`, the
//! first-order optimality system couples control `f`, state `u` and
//! multiplier `lambda`:
//!
//! ```text
//! [ 2*beta*M   0    -M  ] [ f ]   [ 0 ]
//! [    0       M    K^T ] [ u ] = [ b ]
//! [   -M       K     0  ] [ l ]   [ d ]
//! ```
//!
//! The operator is applied blockwise; a sparse materialization exists for
//! export and for the dense verification paths.

use crate::error::{Error, Result};
use crate::fem::DiscreteProblem;
use crate::sparse::SparseMatrix;
use crate::vecops::{dist2, norm2};

/// Saddle-point system `A x = g` held as its blocks.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    beta: f64,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    b: Vec<f64>,
    d: Vec<f64>,
}

impl SaddleSystem {
    /// Builds the system from raw blocks; all pieces must share the
    /// dimension `m` and `beta` must be positive.
    pub fn new(
        beta: f64,
        mass: SparseMatrix,
        stiffness: SparseMatrix,
        b: Vec<f64>,
        d: Vec<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config(format!(
                "regularization weight must be positive, got {beta}"
            )));
        }
        let m = mass.nrows();
        if mass.ncols() != m
            || stiffness.nrows() != m
            || stiffness.ncols() != m
            || b.len() != m
            || d.len() != m
        {
            return Err(Error::DimensionMismatch(
                "saddle blocks must all have the same order".into(),
            ));
        }
        Ok(Self {
            beta,
            mass,
            stiffness,
            b,
            d,
        })
    }

    pub fn from_problem(p: &DiscreteProblem) -> Self {
        Self::new(
            p.beta(),
            p.mass().clone(),
            p.stiffness().clone(),
            p.b().to_vec(),
            p.d().to_vec(),
        )
        .expect("assembled problem pieces are consistent")
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Block dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Total dimension `n = 3m`.
    pub fn total_dim(&self) -> usize {
        3 * self.state_dim()
    }

    /// Right-hand side `g = (0; b; d)`.
    pub fn rhs(&self) -> Vec<f64> {
        let m = self.state_dim();
        let mut g = vec![0.0; 3 * m];
        g[m..2 * m].copy_from_slice(&self.b);
        g[2 * m..].copy_from_slice(&self.d);
        g
    }

    /// Applies the block operator without materializing it.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.state_dim();
        if v.len() != 3 * m {
            return Err(Error::DimensionMismatch(format!(
                "operand length {} does not match 3m = {}",
                v.len(),
                3 * m
            )));
        }
        let (v1, v2, v3) = (&v[..m], &v[m..2 * m], &v[2 * m..]);
        let m_v1 = self.mass.mul_vec(v1);
        let m_v2 = self.mass.mul_vec(v2);
        let m_v3 = self.mass.mul_vec(v3);
        let k_v2 = self.stiffness.mul_vec(v2);
        let kt_v3 = self.stiffness.spmv(v3, true)?;
        let mut out = vec![0.0; 3 * m];
        for i in 0..m {
            out[i] = 2.0 * self.beta * m_v1[i] - m_v3[i];
            out[m + i] = m_v2[i] + kt_v3[i];
            out[2 * m + i] = -m_v1[i] + k_v2[i];
        }
        Ok(out)
    }

    /// Sparse materialization of the full `3m x 3m` operator.
    pub fn materialize(&self) -> SparseMatrix {
        let m = self.state_dim();
        let mut t = Vec::with_capacity(4 * self.mass.nnz() + 2 * self.stiffness.nnz());
        for i in 0..m {
            let (cols, vals) = self.mass.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((i, j, 2.0 * self.beta * v));
                t.push((i, 2 * m + j, -v));
                t.push((m + i, m + j, v));
                t.push((2 * m + i, j, -v));
            }
            let (cols, vals) = self.stiffness.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((2 * m + i, m + j, v));
                t.push((m + j, 2 * m + i, v));
            }
        }
        SparseMatrix::from_triplets(3 * m, 3 * m, &t).expect("block triplets in bounds")
    }

    /// Unpreconditioned residual norm `||g - A x||_2`.
    pub fn true_residual(&self, x: &[f64]) -> Result<f64> {
        let ax = self.apply(x)?;
        Ok(dist2(&self.rhs(), &ax))
    }

    /// Residual norm of the zero vector, i.e. `||g||_2`.
    pub fn rhs_norm(&self) -> f64 {
        norm2(&self.rhs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::dot;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scalar_system() -> SaddleSystem {
        // m = 1 with M = [2], K = [3], beta = 1/4:
        // A = [[1, 0, -2], [0, 2, 3], [-2, 3, 0]].
        SaddleSystem::new(
            0.25,
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap(),
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 3.0)]).unwrap(),
            vec![0.5],
            vec![-1.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let sys = scalar_system();
        assert_eq!(sys.apply(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn scalar_worked_example() {
        let sys = scalar_system();
        let out = sys.apply(&[1.0, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![-3.0, 4.0, -5.0]);
        assert_eq!(sys.rhs(), vec![0.0, 0.5, -1.0]);
        // ||g - A*0|| = ||g||.
        assert!((sys.true_residual(&[0.0; 3]).unwrap() - sys.rhs_norm()).abs() < 1e-16);
    }

    #[test]
    fn materialization_matches_blockwise_apply() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let sys = SaddleSystem::from_problem(&p);
        let a = sys.materialize();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v: Vec<f64> = (0..sys.total_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let blockwise = sys.apply(&v).unwrap();
            let explicit = a.mul_vec(&v);
            for i in 0..v.len() {
                let scale = blockwise[i].abs().max(1.0);
                assert!((blockwise[i] - explicit[i]).abs() < 1e-14 * scale);
            }
        }
    }

    #[test]
    fn materialization_is_bitwise_symmetric_with_expected_sparsity() {
        let p = DiscreteProblem::assemble(2, 1e-4).unwrap();
        let sys = SaddleSystem::from_problem(&p);
        let a = sys.materialize();
        assert_eq!(a, a.transpose());
        assert_eq!(
            a.nnz(),
            4 * p.mass().nnz() + 2 * p.stiffness().nnz(),
            "block layout accounts for every stored entry"
        );
    }

    #[test]
    fn operator_is_self_adjoint() {
        for level in [2u32, 3, 4] {
            let p = DiscreteProblem::assemble(level, 1e-2).unwrap();
            let sys = SaddleSystem::from_problem(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(level as u64);
            for _ in 0..5 {
                let v: Vec<f64> =
                    (0..sys.total_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> =
                    (0..sys.total_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let av = sys.apply(&v).unwrap();
                let aw = sys.apply(&w).unwrap();
                let lhs = dot(&av, &w);
                let rhs = dot(&v, &aw);
                assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(rhs.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = scalar_system();
        assert!(sys.apply(&[1.0, 2.0]).is_err());
        assert!(SaddleSystem::new(
            1e-2,
            SparseMatrix::identity(2),
            SparseMatrix::identity(3),
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .is_err());
    }
}
