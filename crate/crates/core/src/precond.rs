//! Block preconditioners for the saddle-point operator.
//!
//! Every preconditioner in the catalog is applied through a short schedule
//! of block substitutions. Each schedule touches only three primitives:
//! solves with the mass matrix `M`, solves with the stiffness matrix `K`
//! (or its transpose, which shares the factorization because `K` is
//! symmetric), and sparse products with `M` and `K`. One factorization of
//! `M` and one of `K` are computed per problem and mode, and shared by
//! every kind via [`SubSolvers`].
//!
//! Sub-solves run in one of two modes: exact banded Cholesky, or a few
//! iterations of conjugate gradients preconditioned with a threshold
//! incomplete Cholesky factor. The inexact mode makes the preconditioner
//! change from application to application, so the outer solver must be the
//! flexible variant.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fem::DiscreteProblem;
use crate::krylov;
use crate::sparse::band::{band_cholesky, CholeskyFactor};
use crate::sparse::ict::{ict_factor, IncompleteCholeskyFactor};
use crate::sparse::SparseMatrix;

/// Default inner tolerance for the iterative sub-solve mode.
pub const DEFAULT_INNER_TOLERANCE: f64 = 1e-3;
/// Default cap on inner iterations (further limited by the block order).
pub const DEFAULT_INNER_CAP: usize = 20;
/// Default drop tolerance for the incomplete factorization.
pub const DEFAULT_DROP_TOLERANCE: f64 = 1e-2;

/// The catalog of block preconditioners, named by their tags in the
/// comparison tables. Doc comments give the block matrix each one applies
/// the inverse of; `S = K M^{-1} K^T` denotes the Schur complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    /// `[[0, K, 0], [0, M, K^T], [-M, K, 0]]` — couples all three blocks
    /// with one `M`-, one `K`- and one `K^T`-solve per application.
    New,
    /// Block diagonal `diag(2*beta*M, M, S)`.
    D,
    /// `[[0, 0, -M], [0, 2*beta*K^T M^{-1} K M, K^T], [-M, K, 0]]`.
    C,
    /// Block triangular `[[2*beta*M, 0, 0], [0, M, 0], [-M, K, S]]`.
    Bt,
    /// Anti-diagonal `[[0, 0, -M], [0, M, 0], [-M, 0, 0]]`.
    Bcd,
    /// Anti-triangular `[[0, 0, -M], [0, M, K^T], [-M, K, 0]]`.
    Bct,
    /// `[[2*beta*M, 0, -M], [0, M, 0], [-M, 0, 0]]`.
    Bs,
    /// Lower triangular `[[2*beta*M, 0, 0], [0, M, 0], [-M, K, -M/(2*beta)]]`.
    Blt,
    /// `[[2*beta*M, 0, -M], [0, 0, K^T], [-M, K, 0]]`.
    P1,
    /// `[[2*beta*M, 0, -M], [0, M, K^T], [0, K, 0]]`.
    P2,
    /// `[[2*beta*M, 0, -M], [0, M, 0], [-M, K, 0]]`.
    P3,
    /// `[[2*beta*M, 0, -M], [0, M, K^T], [-M, 0, 0]]`.
    P4,
    /// No preconditioning; the baseline for iteration comparisons.
    Identity,
}

impl PreconditionerKind {
    /// The whole catalog, coupled kind first, baseline last.
    pub const ALL: [PreconditionerKind; 13] = [
        PreconditionerKind::New,
        PreconditionerKind::D,
        PreconditionerKind::Bt,
        PreconditionerKind::Bcd,
        PreconditionerKind::Bct,
        PreconditionerKind::C,
        PreconditionerKind::Bs,
        PreconditionerKind::Blt,
        PreconditionerKind::P1,
        PreconditionerKind::P2,
        PreconditionerKind::P3,
        PreconditionerKind::P4,
        PreconditionerKind::Identity,
    ];

    /// The twelve non-trivial kinds (everything but the identity).
    pub fn catalog() -> impl Iterator<Item = PreconditionerKind> {
        Self::ALL
            .into_iter()
            .filter(|k| *k != PreconditionerKind::Identity)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PreconditionerKind::New => "new",
            PreconditionerKind::D => "d",
            PreconditionerKind::C => "c",
            PreconditionerKind::Bt => "bt",
            PreconditionerKind::Bcd => "bcd",
            PreconditionerKind::Bct => "bct",
            PreconditionerKind::Bs => "bs",
            PreconditionerKind::Blt => "blt",
            PreconditionerKind::P1 => "p1",
            PreconditionerKind::P2 => "p2",
            PreconditionerKind::P3 => "p3",
            PreconditionerKind::P4 => "p4",
            PreconditionerKind::Identity => "identity",
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "new" => Ok(PreconditionerKind::New),
            "d" => Ok(PreconditionerKind::D),
            "c" => Ok(PreconditionerKind::C),
            "bt" => Ok(PreconditionerKind::Bt),
            "bcd" => Ok(PreconditionerKind::Bcd),
            "bct" => Ok(PreconditionerKind::Bct),
            "bs" => Ok(PreconditionerKind::Bs),
            "blt" => Ok(PreconditionerKind::Blt),
            "p1" => Ok(PreconditionerKind::P1),
            "p2" => Ok(PreconditionerKind::P2),
            "p3" => Ok(PreconditionerKind::P3),
            "p4" => Ok(PreconditionerKind::P4),
            "identity" | "none" => Ok(PreconditionerKind::Identity),
            other => Err(Error::Config(format!("unknown preconditioner: {other}"))),
        }
    }
}

impl serde::Serialize for PreconditionerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> serde::Deserialize<'de> for PreconditionerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the `M`- and `K`-solves inside a preconditioner are carried out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubSolveMode {
    /// Banded Cholesky, solved to machine precision.
    ExactCholesky,
    /// Conjugate gradients with an incomplete-Cholesky preconditioner,
    /// stopped at a relative residual or an iteration cap, whichever first.
    PcgIct {
        tolerance: f64,
        /// Upper limit on inner iterations; additionally capped by the
        /// block order at build time.
        cap: usize,
        drop_tolerance: f64,
    },
}

impl SubSolveMode {
    pub fn exact() -> Self {
        SubSolveMode::ExactCholesky
    }

    /// The standard inexact configuration.
    pub fn inexact_default() -> Self {
        SubSolveMode::PcgIct {
            tolerance: DEFAULT_INNER_TOLERANCE,
            cap: DEFAULT_INNER_CAP,
            drop_tolerance: DEFAULT_DROP_TOLERANCE,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, SubSolveMode::ExactCholesky)
    }
}

enum SubBackend {
    Exact(CholeskyFactor),
    Iterative {
        factor: IncompleteCholeskyFactor,
        tolerance: f64,
        cap: usize,
    },
}

/// A solver for one symmetric positive definite block, in either mode.
pub struct SubSolver {
    matrix: SparseMatrix,
    backend: SubBackend,
}

impl SubSolver {
    pub fn build(matrix: &SparseMatrix, mode: SubSolveMode) -> Result<Self> {
        let backend = match mode {
            SubSolveMode::ExactCholesky => SubBackend::Exact(band_cholesky(matrix)?),
            SubSolveMode::PcgIct {
                tolerance,
                cap,
                drop_tolerance,
            } => SubBackend::Iterative {
                factor: ict_factor(matrix, drop_tolerance)?,
                tolerance,
                cap: cap.min(matrix.nrows()),
            },
        };
        Ok(Self {
            matrix: matrix.clone(),
            backend,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves the block system; returns the solution and the number of
    /// inner iterations spent (zero in exact mode).
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        match &self.backend {
            SubBackend::Exact(f) => Ok((f.solve(rhs)?, 0)),
            SubBackend::Iterative {
                factor,
                tolerance,
                cap,
            } => {
                let (x, report) = krylov::pcg(&self.matrix, factor, rhs, *tolerance, *cap)?;
                Ok((x, report.iterations))
            }
        }
    }

    /// Solves with the transposed block. The blocks are symmetric, so the
    /// same factorization serves; the entry point exists because the
    /// schedules distinguish the transposed role.
    pub fn solve_transposed(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        self.solve(rhs)
    }
}

/// The shared pair of block solvers: one for `M`, one for `K`.
pub struct SubSolvers {
    pub mass: SubSolver,
    pub stiffness: SubSolver,
}

impl SubSolvers {
    pub fn build(mass: &SparseMatrix, stiffness: &SparseMatrix, mode: SubSolveMode) -> Result<Self> {
        if mass.nrows() != stiffness.nrows() {
            return Err(Error::DimensionMismatch(
                "mass and stiffness blocks differ in order".into(),
            ));
        }
        Ok(Self {
            mass: SubSolver::build(mass, mode)?,
            stiffness: SubSolver::build(stiffness, mode)?,
        })
    }
}

/// Work performed by one preconditioner application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub mass_solves: usize,
    pub stiffness_solves: usize,
    pub transposed_stiffness_solves: usize,
    /// Total inner PCG iterations across all sub-solves (zero in exact
    /// mode).
    pub inner_iterations: usize,
}

/// A ready-to-apply block preconditioner.
pub struct Preconditioner {
    kind: PreconditionerKind,
    beta: f64,
    subs: Arc<SubSolvers>,
}

impl Preconditioner {
    /// Factors the blocks of `problem` and builds the preconditioner.
    pub fn build(
        kind: PreconditionerKind,
        problem: &DiscreteProblem,
        mode: SubSolveMode,
    ) -> Result<Self> {
        let subs = Arc::new(SubSolvers::build(problem.mass(), problem.stiffness(), mode)?);
        Self::with_shared(kind, problem.beta(), subs)
    }

    /// Builds from raw blocks; used for synthetic systems in tests.
    pub fn from_matrices(
        kind: PreconditionerKind,
        beta: f64,
        mass: &SparseMatrix,
        stiffness: &SparseMatrix,
        mode: SubSolveMode,
    ) -> Result<Self> {
        let subs = Arc::new(SubSolvers::build(mass, stiffness, mode)?);
        Self::with_shared(kind, beta, subs)
    }

    /// Builds on top of already-computed factorizations, so a sweep over
    /// many kinds and regularization weights factors each block only once.
    pub fn with_shared(
        kind: PreconditionerKind,
        beta: f64,
        subs: Arc<SubSolvers>,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config(format!(
                "preconditioner requires beta > 0, got {beta}"
            )));
        }
        Ok(Self { kind, beta, subs })
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn state_dim(&self) -> usize {
        self.subs.mass.order()
    }

    /// Applies the inverse of the preconditioner.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_counted(r)?.0)
    }

    /// Applies the inverse and reports the work done.
    pub fn apply_counted(&self, r: &[f64]) -> Result<(Vec<f64>, ApplyStats)> {
        let m = self.state_dim();
        if r.len() != 3 * m {
            return Err(Error::DimensionMismatch(format!(
                "preconditioner operand length {} does not match 3m = {}",
                r.len(),
                3 * m
            )));
        }
        let mut stats = ApplyStats::default();
        let (r1, r2, r3) = (&r[..m], &r[m..2 * m], &r[2 * m..]);
        let mass = &self.subs.mass;
        let stiff = &self.subs.stiffness;
        let two_beta = 2.0 * self.beta;

        let solve_m = |rhs: &[f64], stats: &mut ApplyStats| -> Result<Vec<f64>> {
            let (x, it) = mass.solve(rhs)?;
            stats.mass_solves += 1;
            stats.inner_iterations += it;
            Ok(x)
        };
        let solve_k = |rhs: &[f64], stats: &mut ApplyStats| -> Result<Vec<f64>> {
            let (x, it) = stiff.solve(rhs)?;
            stats.stiffness_solves += 1;
            stats.inner_iterations += it;
            Ok(x)
        };
        let solve_kt = |rhs: &[f64], stats: &mut ApplyStats| -> Result<Vec<f64>> {
            let (x, it) = stiff.solve_transposed(rhs)?;
            stats.transposed_stiffness_solves += 1;
            stats.inner_iterations += it;
            Ok(x)
        };
        let mul_m = |x: &[f64]| mass.matrix().mul_vec(x);
        let mul_k = |x: &[f64]| stiff.matrix().mul_vec(x);
        let mul_kt = |x: &[f64]| stiff.matrix().spmv(x, true).expect("square block");
        let sub = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| a - b).collect()
        };
        let add = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| a + b).collect()
        };

        let (z1, z2, z3) = match self.kind {
            PreconditionerKind::Identity => (r1.to_vec(), r2.to_vec(), r3.to_vec()),
            PreconditionerKind::New => {
                let z1 = solve_m(&sub(r1, r3), &mut stats)?;
                let z2 = solve_k(r1, &mut stats)?;
                let z3 = solve_kt(&sub(r2, &mul_m(&z2)), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::D => {
                let mut z1 = solve_m(r1, &mut stats)?;
                for v in &mut z1 {
                    *v /= two_beta;
                }
                let z2 = solve_m(r2, &mut stats)?;
                let z3 = solve_kt(&mul_m(&solve_k(r3, &mut stats)?), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::C => {
                let mut z3 = solve_m(r1, &mut stats)?;
                for v in &mut z3 {
                    *v = -*v;
                }
                let t = solve_kt(&sub(r2, &mul_kt(&z3)), &mut stats)?;
                let t = solve_k(&mul_m(&t), &mut stats)?;
                let mut z2 = solve_m(&t, &mut stats)?;
                for v in &mut z2 {
                    *v /= two_beta;
                }
                let z1 = solve_m(&sub(&mul_k(&z2), r3), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::Bt => {
                let mut z1 = solve_m(r1, &mut stats)?;
                for v in &mut z1 {
                    *v /= two_beta;
                }
                let z2 = solve_m(r2, &mut stats)?;
                let t = sub(&add(r3, &mul_m(&z1)), &mul_k(&z2));
                let z3 = solve_kt(&mul_m(&solve_k(&t, &mut stats)?), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::Bcd => {
                let mut z3 = solve_m(r1, &mut stats)?;
                for v in &mut z3 {
                    *v = -*v;
                }
                let z2 = solve_m(r2, &mut stats)?;
                let mut z1 = solve_m(r3, &mut stats)?;
                for v in &mut z1 {
                    *v = -*v;
                }
                (z1, z2, z3)
            }
            PreconditionerKind::Bct => {
                let mut z3 = solve_m(r1, &mut stats)?;
                for v in &mut z3 {
                    *v = -*v;
                }
                let z2 = solve_m(&sub(r2, &mul_kt(&z3)), &mut stats)?;
                let z1 = solve_m(&sub(&mul_k(&z2), r3), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::Bs => {
                let mut z1 = solve_m(r3, &mut stats)?;
                for v in &mut z1 {
                    *v = -*v;
                }
                let z2 = solve_m(r2, &mut stats)?;
                let m_inv_r1 = solve_m(r1, &mut stats)?;
                let z3: Vec<f64> = z1
                    .iter()
                    .zip(&m_inv_r1)
                    .map(|(a, b)| two_beta * a - b)
                    .collect();
                (z1, z2, z3)
            }
            PreconditionerKind::Blt => {
                let mut z1 = solve_m(r1, &mut stats)?;
                for v in &mut z1 {
                    *v /= two_beta;
                }
                let z2 = solve_m(r2, &mut stats)?;
                let t = sub(&add(r3, &mul_m(&z1)), &mul_k(&z2));
                let mut z3 = solve_m(&t, &mut stats)?;
                for v in &mut z3 {
                    *v *= -two_beta;
                }
                (z1, z2, z3)
            }
            PreconditionerKind::P1 => {
                let z3 = solve_kt(r2, &mut stats)?;
                let m_inv_r1 = solve_m(r1, &mut stats)?;
                let z1: Vec<f64> = m_inv_r1
                    .iter()
                    .zip(&z3)
                    .map(|(a, b)| (a + b) / two_beta)
                    .collect();
                let z2 = solve_k(&add(r3, &mul_m(&z1)), &mut stats)?;
                (z1, z2, z3)
            }
            PreconditionerKind::P2 => {
                let z2 = solve_k(r3, &mut stats)?;
                let z3 = solve_kt(&sub(r2, &mul_m(&z2)), &mut stats)?;
                let m_inv_r1 = solve_m(r1, &mut stats)?;
                let z1: Vec<f64> = m_inv_r1
                    .iter()
                    .zip(&z3)
                    .map(|(a, b)| (a + b) / two_beta)
                    .collect();
                (z1, z2, z3)
            }
            PreconditionerKind::P3 => {
                let z2 = solve_m(r2, &mut stats)?;
                let z1 = solve_m(&sub(&mul_k(&z2), r3), &mut stats)?;
                let m_inv_r1 = solve_m(r1, &mut stats)?;
                let z3: Vec<f64> = z1
                    .iter()
                    .zip(&m_inv_r1)
                    .map(|(a, b)| two_beta * a - b)
                    .collect();
                (z1, z2, z3)
            }
            PreconditionerKind::P4 => {
                let mut z1 = solve_m(r3, &mut stats)?;
                for v in &mut z1 {
                    *v = -*v;
                }
                let m_inv_r1 = solve_m(r1, &mut stats)?;
                let z3: Vec<f64> = z1
                    .iter()
                    .zip(&m_inv_r1)
                    .map(|(a, b)| two_beta * a - b)
                    .collect();
                let z2 = solve_m(&sub(r2, &mul_kt(&z3)), &mut stats)?;
                (z1, z2, z3)
            }
        };
        let mut z = Vec::with_capacity(3 * m);
        z.extend_from_slice(&z1);
        z.extend_from_slice(&z2);
        z.extend_from_slice(&z3);
        Ok((z, stats))
    }

    /// Materializes the preconditioner as a dense matrix; verification only,
    /// guarded to small problems. Schur-complement blocks use an exact
    /// factorization of `M` regardless of the sub-solve mode.
    pub fn materialize_dense(&self) -> Result<DenseMatrix> {
        let m = self.state_dim();
        if m > 1024 {
            return Err(Error::Config(format!(
                "refusing to materialize a dense preconditioner at block order {m}"
            )));
        }
        let beta = self.beta;
        let md = self.subs.mass.matrix().to_dense();
        let kd = self.subs.stiffness.matrix().to_dense();
        let kdt = kd.transpose();
        let zero = DenseMatrix::zeros(m, m);
        let neg_md = md.scaled(-1.0);
        let bmd = md.scaled(2.0 * beta);

        // Dense application of M^{-1} to every column of a matrix.
        let m_factor = band_cholesky(self.subs.mass.matrix())?;
        let m_inv = |a: &DenseMatrix| -> Result<DenseMatrix> {
            let mut out = DenseMatrix::zeros(m, m);
            for j in 0..m {
                out.set_column(j, &m_factor.solve(&a.column(j))?);
            }
            Ok(out)
        };

        let blocks: [[&DenseMatrix; 3]; 3];
        let schur;
        let c_center;
        let blt_corner;
        match self.kind {
            PreconditionerKind::Identity => {
                return Ok(DenseMatrix::identity(3 * m));
            }
            PreconditionerKind::New => {
                blocks = [
                    [&zero, &kd, &zero],
                    [&zero, &md, &kdt],
                    [&neg_md, &kd, &zero],
                ];
            }
            PreconditionerKind::D => {
                schur = kd.matmul(&m_inv(&kdt)?);
                blocks = [
                    [&bmd, &zero, &zero],
                    [&zero, &md, &zero],
                    [&zero, &zero, &schur],
                ];
            }
            PreconditionerKind::C => {
                c_center = kdt.matmul(&m_inv(&kd.matmul(&md))?).scaled(2.0 * beta);
                blocks = [
                    [&zero, &zero, &neg_md],
                    [&zero, &c_center, &kdt],
                    [&neg_md, &kd, &zero],
                ];
            }
            PreconditionerKind::Bt => {
                schur = kd.matmul(&m_inv(&kdt)?);
                blocks = [
                    [&bmd, &zero, &zero],
                    [&zero, &md, &zero],
                    [&neg_md, &kd, &schur],
                ];
            }
            PreconditionerKind::Bcd => {
                blocks = [
                    [&zero, &zero, &neg_md],
                    [&zero, &md, &zero],
                    [&neg_md, &zero, &zero],
                ];
            }
            PreconditionerKind::Bct => {
                blocks = [
                    [&zero, &zero, &neg_md],
                    [&zero, &md, &kdt],
                    [&neg_md, &kd, &zero],
                ];
            }
            PreconditionerKind::Bs => {
                blocks = [
                    [&bmd, &zero, &neg_md],
                    [&zero, &md, &zero],
                    [&neg_md, &zero, &zero],
                ];
            }
            PreconditionerKind::Blt => {
                blt_corner = md.scaled(-1.0 / (2.0 * beta));
                blocks = [
                    [&bmd, &zero, &zero],
                    [&zero, &md, &zero],
                    [&neg_md, &kd, &blt_corner],
                ];
            }
            PreconditionerKind::P1 => {
                blocks = [
                    [&bmd, &zero, &neg_md],
                    [&zero, &zero, &kdt],
                    [&neg_md, &kd, &zero],
                ];
            }
            PreconditionerKind::P2 => {
                blocks = [
                    [&bmd, &zero, &neg_md],
                    [&zero, &md, &kdt],
                    [&zero, &kd, &zero],
                ];
            }
            PreconditionerKind::P3 => {
                blocks = [
                    [&bmd, &zero, &neg_md],
                    [&zero, &md, &zero],
                    [&neg_md, &kd, &zero],
                ];
            }
            PreconditionerKind::P4 => {
                blocks = [
                    [&bmd, &zero, &neg_md],
                    [&zero, &md, &kdt],
                    [&neg_md, &zero, &zero],
                ];
            }
        }
        let mut out = DenseMatrix::zeros(3 * m, 3 * m);
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, block) in row.iter().enumerate() {
                out.set_block(bi * m, bj * m, block);
            }
        }
        Ok(out)
    }
}
