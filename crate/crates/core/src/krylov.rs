//! Iterative solvers: full GMRES (right-preconditioned), its flexible
//! variant, conjugate gradients for the symmetric positive definite
//! sub-blocks, and a Chebyshev semi-iteration for operators with real
//! spectrum in a known interval.
//!
//! All solvers share the same reporting conventions: the residual history
//! starts at `1.0` for the initial guess, intermediate entries are the
//! cheap per-iteration estimates, and the final entry is replaced by the
//! exactly recomputed relative residual of the returned solution. A solve
//! only reports `converged` after that recomputed residual passes the
//! tolerance (or the basis closed exactly, which GMRES detects as a happy
//! breakdown).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::sparse::ict::IncompleteCholeskyFactor;
use crate::sparse::SparseMatrix;
use crate::vecops::{axpy, dot, norm2};

/// Default relative residual tolerance for outer solves.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Default ceiling on outer iterations (also capped by the system order).
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Reorthogonalization trigger: a second orthogonalization pass runs when
/// one pass removes more than this fraction of the candidate vector.
const REORTH_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Acceptance slack for the recomputed true residual, covering rounding
/// between the estimated and actual residual norms.
const TRUE_RESIDUAL_RELATIVE_SLACK: f64 = 1e-8;
const TRUE_RESIDUAL_ABSOLUTE_SLACK: f64 = 1e-14;

/// Which outer iteration drives a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverMethod {
    Gmres,
    Fgmres,
    Chebyshev,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMethod::Gmres => "gmres",
            SolverMethod::Fgmres => "fgmres",
            SolverMethod::Chebyshev => "chebyshev",
        })
    }
}

impl FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gmres" => Ok(SolverMethod::Gmres),
            "fgmres" => Ok(SolverMethod::Fgmres),
            "chebyshev" => Ok(SolverMethod::Chebyshev),
            other => Err(Error::Config(format!("unknown solver: {other}"))),
        }
    }
}

/// Tolerance and iteration budget for an outer solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolverConfig {
    /// The standard configuration for a system of the given order.
    pub fn for_dim(n: usize) -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS.min(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Outcome of an outer solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Outer iterations performed.
    pub iterations: usize,
    /// Whether the recomputed true residual met the tolerance.
    pub converged: bool,
    /// `relative_residuals[0] == 1.0`; one entry per iteration after that,
    /// with the last entry recomputed from the returned solution.
    pub relative_residuals: Vec<f64>,
    pub wall_seconds: f64,
    /// Inner iterations spent inside preconditioner applications.
    pub inner_iterations: usize,
}

impl SolveReport {
    pub fn final_relative_residual(&self) -> f64 {
        *self.relative_residuals.last().unwrap_or(&f64::NAN)
    }
}

/// Per-iteration data captured by the traced solver variants.
#[derive(Debug, Clone, Default)]
pub struct KrylovTrace {
    /// `iterates[k]` is the approximate solution after `k + 1` iterations.
    pub iterates: Vec<Vec<f64>>,
    /// Orthonormal basis vectors produced by the Arnoldi process.
    pub basis: Vec<Vec<f64>>,
}

fn accepts(true_residual: f64, tolerance: f64, rhs_norm: f64) -> bool {
    true_residual
        <= tolerance * rhs_norm * (1.0 + TRUE_RESIDUAL_RELATIVE_SLACK)
            + TRUE_RESIDUAL_ABSOLUTE_SLACK
}

/// Right-preconditioned full GMRES. The preconditioner must be a fixed
/// linear operator; use [`fgmres`] when it varies between applications.
pub fn gmres<A, P>(
    op: A,
    prec: P,
    rhs: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    let (x, report, _) = arnoldi_driver(op, prec, rhs, config, false, false)?;
    Ok((x, report))
}

/// Flexible GMRES: stores the preconditioned directions so the
/// preconditioner may change from application to application.
pub fn fgmres<A, P>(
    op: A,
    prec: P,
    rhs: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    let (x, report, _) = arnoldi_driver(op, prec, rhs, config, true, false)?;
    Ok((x, report))
}

/// As [`gmres`], additionally recording every iterate and basis vector.
pub fn gmres_traced<A, P>(
    op: A,
    prec: P,
    rhs: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport, KrylovTrace)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    let (x, report, trace) = arnoldi_driver(op, prec, rhs, config, false, true)?;
    Ok((x, report, trace.expect("trace requested")))
}

/// As [`fgmres`], additionally recording every iterate and basis vector.
pub fn fgmres_traced<A, P>(
    op: A,
    prec: P,
    rhs: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport, KrylovTrace)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    let (x, report, trace) = arnoldi_driver(op, prec, rhs, config, true, true)?;
    Ok((x, report, trace.expect("trace requested")))
}

fn arnoldi_driver<A, P>(
    op: A,
    mut prec: P,
    rhs: &[f64],
    config: &SolverConfig,
    flexible: bool,
    traced: bool,
) -> Result<(Vec<f64>, SolveReport, Option<KrylovTrace>)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    config.validate()?;
    let start = Instant::now();
    let n = rhs.len();
    let rhs_norm = norm2(rhs);
    let mut trace = traced.then(KrylovTrace::default);
    if rhs_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                converged: true,
                relative_residuals: vec![0.0],
                wall_seconds: start.elapsed().as_secs_f64(),
                inner_iterations: 0,
            },
            trace,
        ));
    }

    // Zero initial guess, so the first residual is the right-hand side.
    let mut basis: Vec<Vec<f64>> = vec![rhs.iter().map(|v| v / rhs_norm).collect()];
    let mut directions: Vec<Vec<f64>> = Vec::new();
    // Hessenberg columns after Givens rotations (upper triangular part).
    let mut r_columns: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![rhs_norm];
    let mut history = vec![1.0];
    let mut inner_total = 0usize;
    if let Some(t) = trace.as_mut() {
        t.basis.push(basis[0].clone());
    }

    let assemble = |k: usize,
                    r_columns: &[Vec<f64>],
                    g: &[f64],
                    basis: &[Vec<f64>],
                    directions: &[Vec<f64>],
                    prec: &mut P,
                    inner_total: &mut usize|
     -> Result<Vec<f64>> {
        // Back-substitute the rotated Hessenberg system for the small
        // coefficient vector, then expand in the stored directions.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= r_columns[j][i] * y[j];
            }
            let d = r_columns[i][i];
            if d.abs() < f64::MIN_POSITIVE {
                return Err(Error::Verification(
                    "singular projected system in GMRES".into(),
                ));
            }
            y[i] = s / d;
        }
        let mut combo = vec![0.0; basis[0].len()];
        if flexible {
            for (yj, z) in y.iter().zip(directions) {
                axpy(*yj, z, &mut combo);
            }
            Ok(combo)
        } else {
            for (yj, v) in y.iter().zip(basis) {
                axpy(*yj, v, &mut combo);
            }
            let (z, it) = prec(&combo)?;
            *inner_total += it;
            Ok(z)
        }
    };

    let max_iterations = config.max_iterations.min(n);
    let mut iterations = 0usize;
    for j in 0..max_iterations {
        let (z, inner) = prec(&basis[j])?;
        inner_total += inner;
        let mut w = op(&z);
        if w.len() != n {
            return Err(Error::DimensionMismatch(
                "operator changed the vector length".into(),
            ));
        }
        if flexible {
            directions.push(z);
        }

        // Modified Gram-Schmidt with one selective reorthogonalization
        // pass; keeps the basis orthonormal even over long stagnating runs.
        let scale_before = norm2(&w);
        let mut h = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let c = dot(&w, v);
            h[i] = c;
            axpy(-c, v, &mut w);
        }
        if norm2(&w) < REORTH_THRESHOLD * scale_before {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[i] += c;
                axpy(-c, v, &mut w);
            }
        }
        let w_norm = norm2(&w);
        h[j + 1] = w_norm;
        let happy = w_norm <= 1e-14 * scale_before.max(f64::MIN_POSITIVE);
        if !happy {
            basis.push(w.iter().map(|v| v / w_norm).collect());
            if let Some(t) = trace.as_mut() {
                t.basis.push(basis[j + 1].clone());
            }
        }

        // Fold in the accumulated rotations, then zero the subdiagonal.
        for (i, (c, s)) in rotations.iter().enumerate() {
            let hi = h[i];
            let hi1 = h[i + 1];
            h[i] = c * hi + s * hi1;
            h[i + 1] = -s * hi + c * hi1;
        }
        let (c, s) = {
            let (a, b) = (h[j], h[j + 1]);
            let r = a.hypot(b);
            if r == 0.0 {
                (1.0, 0.0)
            } else {
                (a / r, b / r)
            }
        };
        h[j] = c * h[j] + s * h[j + 1];
        h[j + 1] = 0.0;
        rotations.push((c, s));
        h.truncate(j + 1);
        r_columns.push(h);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);

        iterations = j + 1;
        let estimate = g[j + 1].abs() / rhs_norm;
        history.push(estimate);
        if let Some(t) = trace.as_mut() {
            let xk = assemble(
                iterations,
                &r_columns,
                &g,
                &basis,
                &directions,
                &mut prec,
                &mut inner_total,
            )?;
            t.iterates.push(xk);
        }

        let at_limit = iterations == max_iterations;
        if estimate <= config.tolerance || happy || at_limit {
            let x = assemble(
                iterations,
                &r_columns,
                &g,
                &basis,
                &directions,
                &mut prec,
                &mut inner_total,
            )?;
            let mut residual = rhs.to_vec();
            let ax = op(&x);
            axpy(-1.0, &ax, &mut residual);
            let true_residual = norm2(&residual);
            let accepted = accepts(true_residual, config.tolerance, rhs_norm);
            if accepted || happy || at_limit {
                *history.last_mut().unwrap() = true_residual / rhs_norm;
                return Ok((
                    x,
                    SolveReport {
                        iterations,
                        converged: accepted || happy,
                        relative_residuals: history,
                        wall_seconds: start.elapsed().as_secs_f64(),
                        inner_iterations: inner_total,
                    },
                    trace,
                ));
            }
            // The estimate passed but the recomputed residual did not
            // (inexact preconditioning); keep iterating.
        }
    }

    // max_iterations == 0: report the unimproved initial guess.
    Ok((
        vec![0.0; n],
        SolveReport {
            iterations,
            converged: false,
            relative_residuals: history,
            wall_seconds: start.elapsed().as_secs_f64(),
            inner_iterations: inner_total,
        },
        trace,
    ))
}

/// Preconditioned conjugate gradients with an incomplete-Cholesky
/// preconditioner; the inner workhorse for the inexact sub-solve mode.
/// Stops on the relative residual of the original system.
pub fn pcg(
    a: &SparseMatrix,
    factor: &IncompleteCholeskyFactor,
    rhs: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = rhs.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "pcg operator is {}x{} but the right-hand side has length {n}",
            a.nrows(),
            a.ncols()
        )));
    }
    let rhs_norm = norm2(rhs);
    let mut history = vec![1.0];
    if rhs_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                converged: true,
                relative_residuals: vec![0.0],
                wall_seconds: start.elapsed().as_secs_f64(),
                inner_iterations: 0,
            },
        ));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = factor.solve(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iterations {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Verification(format!(
                "pcg encountered a non-positive curvature {pap}"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let rel = norm2(&r) / rhs_norm;
        history.push(rel);
        if rel <= tolerance {
            converged = true;
            break;
        }
        z = factor.solve(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((
        x,
        SolveReport {
            iterations,
            converged,
            relative_residuals: history,
            wall_seconds: start.elapsed().as_secs_f64(),
            inner_iterations: 0,
        },
    ))
}

/// Chebyshev semi-iteration for a preconditioned operator whose spectrum
/// lies in the real interval `[interval.0, interval.1]`. Needs no inner
/// products, so the per-iteration cost is one operator and one
/// preconditioner application.
pub fn chebyshev<A, P>(
    op: A,
    mut prec: P,
    rhs: &[f64],
    interval: (f64, f64),
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Result<(Vec<f64>, usize)>,
{
    config.validate()?;
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::Config(format!(
            "chebyshev needs a positive interval with lo < hi, got [{lo}, {hi}]"
        )));
    }
    let start = Instant::now();
    let n = rhs.len();
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                converged: true,
                relative_residuals: vec![0.0],
                wall_seconds: start.elapsed().as_secs_f64(),
                inner_iterations: 0,
            },
        ));
    }

    let theta = 0.5 * (hi + lo);
    let delta = 0.5 * (hi - lo);
    let sigma = theta / delta;
    let mut rho = 1.0 / sigma;

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut inner_total = 0usize;
    let (z0, it0) = prec(&r)?;
    inner_total += it0;
    let mut d: Vec<f64> = z0.iter().map(|v| v / theta).collect();
    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        axpy(1.0, &d, &mut x);
        let ad = op(&d);
        axpy(-1.0, &ad, &mut r);
        iterations += 1;
        let rel = norm2(&r) / rhs_norm;
        history.push(rel);
        if rel <= config.tolerance {
            // Confirm against a freshly computed residual before accepting.
            let mut fresh = rhs.to_vec();
            let ax = op(&x);
            axpy(-1.0, &ax, &mut fresh);
            let true_residual = norm2(&fresh);
            if accepts(true_residual, config.tolerance, rhs_norm) {
                *history.last_mut().unwrap() = true_residual / rhs_norm;
                converged = true;
                break;
            }
            r = fresh;
        }
        let (z, it) = prec(&r)?;
        inner_total += it;
        let rho_next = 1.0 / (2.0 * sigma - rho);
        let blend = rho_next * rho;
        let scale = 2.0 * rho_next / delta;
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = blend * *di + scale * zi;
        }
        rho = rho_next;
    }
    if !converged {
        let mut fresh = rhs.to_vec();
        let ax = op(&x);
        axpy(-1.0, &ax, &mut fresh);
        *history.last_mut().unwrap() = norm2(&fresh) / rhs_norm;
    }
    Ok((
        x,
        SolveReport {
            iterations,
            converged,
            relative_residuals: history,
            wall_seconds: start.elapsed().as_secs_f64(),
            inner_iterations: inner_total,
        },
    ))
}
