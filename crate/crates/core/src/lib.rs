//! Sparse linear algebra and block preconditioning for the saddle-point
//! systems of distributed optimal control.
//!
//! The library assembles the first-order optimality system of the
//! Poisson-constrained control problem on the unit square — a symmetric
//! indefinite 3m-by-3m operator built from a mass matrix `M` and a
//! stiffness matrix `K` — and solves it with Krylov methods under a
//! catalog of block preconditioners. The centerpiece of the catalog
//! couples all three unknown blocks and needs one solve with `M`, one
//! with `K` and one with `K^T` per application; its preconditioned
//! spectrum is eigenvalue one with multiplicity `2m` plus `m` real values
//! in a closed-form interval, which the [`spectral`] module verifies
//! numerically.
//!
//! Layout:
//! * [`sparse`] — CSR storage, band Cholesky, threshold incomplete
//!   Cholesky, Matrix Market I/O.
//! * [`dense`] — small dense helpers: a Jacobi eigensolver and a rank
//!   routine for the verification paths.
//! * [`fem`] — bilinear quadrilateral assembly of `M`, `K` and the
//!   right-hand sides on uniform grids.
//! * [`saddle`] — the block operator, applied matrix-free or
//!   materialized.
//! * [`precond`] — the preconditioner catalog with exact or truncated
//!   inner solves.
//! * [`krylov`] — GMRES, flexible GMRES, conjugate gradients, Chebyshev.
//! * [`spectral`] — eigenvalue verification and spectrum dumps.
//! * [`harness`] — the benchmark matrix, table rendering, verification
//!   sweep.

pub mod dense;
pub mod error;
pub mod fem;
pub mod harness;
pub mod krylov;
pub mod precond;
pub mod saddle;
pub mod sparse;
pub mod spectral;
pub mod vecops;

pub use error::{Error, Result};
