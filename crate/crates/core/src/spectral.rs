//! Spectral verification for the coupled preconditioner.
//!
//! The preconditioned operator has eigenvalue one with multiplicity `2m`;
//! the remaining `m` eigenvalues are `2*beta` plus the eigenvalues of
//! `K^{-T} M K^{-1} M`. That product is not symmetric, but with `M = L L^T`
//! it is similar to `S = L^T (K^{-T} M K^{-1}) L = Y^T M Y` with
//! `Y = K^{-1} L`, which is symmetric positive definite by construction.
//! Everything here runs through that reduction: a dense symmetric
//! eigensolve on `S` delivers the non-unit spectrum and, via back
//! substitution, eigenvectors of the full preconditioned operator. The
//! unit multiplicity is certified separately by a rank computation on
//! `P^{-1}A - I`, avoiding a general nonsymmetric eigensolver.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dense::{jacobi_eigen, rank_by_elimination, DenseMatrix};
use crate::error::{Error, Result};
use crate::fem::DiscreteProblem;
use crate::precond::{Preconditioner, PreconditionerKind, SubSolveMode};
use crate::saddle::SaddleSystem;
use crate::sparse::band::{band_cholesky, CholeskyFactor};
use crate::sparse::SparseMatrix;
use crate::vecops::{dist2, dot, norm2};

/// Eigenvalues this close to one count as members of the unit cluster.
pub const UNIT_CLUSTER_TOL: f64 = 1e-8;
/// Absolute slack for the interval bound checks.
pub const BOUND_SLACK: f64 = 1e-12;
/// Largest regularization weight for which the non-unit eigenvalues are
/// guaranteed inside `(2*beta, 1]`, making the Chebyshev interval valid.
pub const CHEBYSHEV_BETA_LIMIT: f64 = 0.4987;
/// Relative pivot threshold that separates the numerical rank of
/// `P^{-1}A - I` from factorization round-off.
const RANK_RELATIVE_TOL: f64 = 1e-8;
/// Level ceilings for the dense eigenwork.
const MAX_SPECTRUM_LEVEL: u32 = 5;
const MAX_VERIFY_LEVEL: u32 = 4;

/// The interval known to contain the whole preconditioned spectrum for
/// `beta` at or below [`CHEBYSHEV_BETA_LIMIT`].
pub fn preconditioned_interval(beta: f64) -> (f64, f64) {
    (2.0 * beta, 1.0)
}

/// Closed-form interval `[2b + h^4/1296, 2b + 1/(4 pi^4)]` containing all
/// non-unit eigenvalues of the preconditioned operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub h: f64,
    pub beta: f64,
}

impl SpectralBounds {
    /// Constants entering the bound chain: mass Rayleigh quotients lie in
    /// `[C1*h^2, C2*h^2]` and stiffness ones in `[D1*h^2, D2]`.
    pub const C1: f64 = 1.0 / 9.0;
    pub const C2: f64 = 1.0;
    pub const D1: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    pub const D2: f64 = 4.0;

    pub fn new(h: f64, beta: f64) -> Self {
        Self { h, beta }
    }

    pub fn for_problem(problem: &DiscreteProblem) -> Self {
        Self::new(problem.grid().h(), problem.beta())
    }

    /// `2*beta + (C1^2/D2^2) h^4 = 2*beta + h^4/1296`.
    pub fn lower(&self) -> f64 {
        2.0 * self.beta + (Self::C1 * Self::C1 / (Self::D2 * Self::D2)) * self.h.powi(4)
    }

    /// `2*beta + C2^2/D1^2 = 2*beta + 1/(4 pi^4)`.
    pub fn upper(&self) -> f64 {
        2.0 * self.beta + Self::C2 * Self::C2 / (Self::D1 * Self::D1)
    }

    pub fn contains(&self, value: f64, slack: f64) -> bool {
        value >= self.lower() - slack && value <= self.upper() + slack
    }
}

/// Outcome of the multiplicity and bound verification.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues within [`UNIT_CLUSTER_TOL`] of one; certified as
    /// `3m - rank(P^{-1}A - I)`.
    pub unit_count: usize,
    /// The `m` remaining eigenvalues, ascending.
    pub nonunit_values: Vec<f64>,
    pub bounds: SpectralBounds,
    /// Every non-unit value inside the bound interval (with slack).
    pub all_within: bool,
    /// Numerical rank of the shifted preconditioned operator.
    pub rank_of_shifted: usize,
    /// Worst relative residual over sampled unit-eigenspace vectors.
    pub max_unit_residual: f64,
    /// Worst relative residual over the recovered non-unit eigenpairs.
    pub max_nonunit_residual: f64,
}

/// Builds the symmetric reduced matrix `S = Y^T M Y`, `Y = K^{-1} L`,
/// whose eigenvalues (plus `2*beta`) are the non-unit spectrum.
pub fn reduced_symmetric(mass: &SparseMatrix, stiffness: &SparseMatrix) -> Result<DenseMatrix> {
    let chol_m = band_cholesky(mass)?;
    reduced_symmetric_with(mass, stiffness, &chol_m)
}

fn reduced_symmetric_with(
    mass: &SparseMatrix,
    stiffness: &SparseMatrix,
    chol_m: &CholeskyFactor,
) -> Result<DenseMatrix> {
    let m = mass.nrows();
    if stiffness.nrows() != m || stiffness.ncols() != m || mass.ncols() != m {
        return Err(Error::DimensionMismatch(
            "reduced problem needs square blocks of equal order".into(),
        ));
    }
    let chol_k = band_cholesky(stiffness)?;
    // Columns of L, gathered from the row-oriented factor.
    let mut l_columns = vec![vec![0.0; m]; m];
    for i in 0..m {
        let (cols, vals) = chol_m.lower().row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            l_columns[j][i] = v;
        }
    }
    let mut y_columns = Vec::with_capacity(m);
    let mut my_columns = Vec::with_capacity(m);
    for col in &l_columns {
        let y = chol_k.solve(col)?;
        my_columns.push(mass.mul_vec(&y));
        y_columns.push(y);
    }
    // Fill the upper triangle and mirror, so S is symmetric exactly.
    let mut s = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = dot(&y_columns[i], &my_columns[j]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

fn reduced_eigen(
    mass: &SparseMatrix,
    stiffness: &SparseMatrix,
) -> Result<(Vec<f64>, DenseMatrix, CholeskyFactor)> {
    let chol_m = band_cholesky(mass)?;
    let s = reduced_symmetric_with(mass, stiffness, &chol_m)?;
    let (values, vectors) = jacobi_eigen(&s)?;
    Ok((values, vectors, chol_m))
}

/// Non-unit eigenvalues of the preconditioned operator from raw blocks,
/// ascending. Exposed separately so closed-form cases (down to order one)
/// can serve as oracles.
pub fn nonunit_spectrum_blocks(
    mass: &SparseMatrix,
    stiffness: &SparseMatrix,
    beta: f64,
) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let (values, _, _) = reduced_eigen(mass, stiffness)?;
    Ok(values.into_iter().map(|s| 2.0 * beta + s).collect())
}

/// The `m` non-unit eigenvalues of `P^{-1}A` for the assembled problem.
pub fn nonunit_spectrum(problem: &DiscreteProblem) -> Result<Vec<f64>> {
    let level = problem.grid().level();
    if level > MAX_SPECTRUM_LEVEL {
        return Err(Error::LevelOutOfRange {
            level,
            min: crate::fem::MIN_LEVEL,
            max: MAX_SPECTRUM_LEVEL,
        });
    }
    nonunit_spectrum_blocks(problem.mass(), problem.stiffness(), problem.beta())
}

/// True iff every non-unit eigenvalue lies in the closed-form interval,
/// with [`BOUND_SLACK`] absolute slack on both ends.
pub fn verify_bounds(problem: &DiscreteProblem) -> Result<bool> {
    let values = nonunit_spectrum(problem)?;
    let bounds = SpectralBounds::for_problem(problem);
    Ok(values.iter().all(|&v| bounds.contains(v, BOUND_SLACK)))
}

/// True iff every non-unit eigenvalue lies in `(2*beta, 1 + slack]`. The
/// upper end is only guaranteed for `beta` at or below
/// [`CHEBYSHEV_BETA_LIMIT`]; the lower end is strict for any `beta`.
pub fn verify_containment(problem: &DiscreteProblem) -> Result<bool> {
    let values = nonunit_spectrum(problem)?;
    let floor = 2.0 * problem.beta();
    Ok(values
        .iter()
        .all(|&v| v > floor && v <= 1.0 + BOUND_SLACK))
}

/// Certifies the unit multiplicity `2m` of the preconditioned operator and
/// cross-checks the analytic eigenvector forms.
///
/// Fails with a verification error naming the first violated check; on
/// success the returned report satisfies
/// `unit_count + nonunit_values.len() == 3m`.
pub fn verify_unit_multiplicity(problem: &DiscreteProblem) -> Result<SpectrumReport> {
    let level = problem.grid().level();
    if level > MAX_VERIFY_LEVEL {
        return Err(Error::LevelOutOfRange {
            level,
            min: crate::fem::MIN_LEVEL,
            max: MAX_VERIFY_LEVEL,
        });
    }
    let m = problem.state_dim();
    let n = problem.total_dim();
    let beta = problem.beta();
    let system = SaddleSystem::from_problem(problem);
    let pc = Preconditioner::build(PreconditionerKind::New, problem, SubSolveMode::exact())?;

    // Rank of P^{-1}A - I: its kernel is exactly the unit eigenspace.
    let mut shifted = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let mut col = pc.apply(&system.apply(&e)?)?;
        col[j] -= 1.0;
        shifted.set_column(j, &col);
        e[j] = 0.0;
    }
    let rank = rank_by_elimination(&shifted, RANK_RELATIVE_TOL);
    let unit_count = n - rank;
    if rank != m {
        return Err(Error::Verification(format!(
            "rank of shifted preconditioned operator is {rank}, expected m = {m}"
        )));
    }

    // Unit eigenspace: w = ((z + M^{-1}K y)/(2*beta); y; z) for any y, z.
    let mass_factor = band_cholesky(problem.mass())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut max_unit_residual = 0.0_f64;
    for _ in 0..5 {
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let minv_ky = mass_factor.solve(&problem.stiffness().mul_vec(&y))?;
        let mut w = Vec::with_capacity(n);
        w.extend(z.iter().zip(&minv_ky).map(|(a, b)| (a + b) / (2.0 * beta)));
        w.extend_from_slice(&y);
        w.extend_from_slice(&z);
        let pw = pc.apply(&system.apply(&w)?)?;
        max_unit_residual = max_unit_residual.max(dist2(&pw, &w) / norm2(&w));
    }
    if max_unit_residual > 1e-9 {
        return Err(Error::Verification(format!(
            "unit-eigenspace residual {max_unit_residual:.3e} exceeds 1e-9"
        )));
    }

    // Non-unit pairs from the reduced problem; for each eigenvector q of
    // S, z = L^{-T} q and v = (M^{-1}K v2; v2; z) with v2 = -M^{-1}K^T z.
    let (s_values, s_vectors, _) = reduced_eigen(problem.mass(), problem.stiffness())?;
    let nonunit_values: Vec<f64> = s_values.iter().map(|s| 2.0 * beta + s).collect();
    let mut max_nonunit_residual = 0.0_f64;
    for (i, &lambda) in nonunit_values.iter().enumerate() {
        if (lambda - 1.0).abs() <= UNIT_CLUSTER_TOL {
            return Err(Error::Verification(format!(
                "non-unit eigenvalue {lambda} falls inside the unit cluster"
            )));
        }
        let q = s_vectors.column(i);
        let z = mass_factor.solve_lower_transposed(&q)?;
        let v2: Vec<f64> = mass_factor
            .solve(&problem.stiffness().spmv(&z, true)?)?
            .iter()
            .map(|v| -v)
            .collect();
        let v1 = mass_factor.solve(&problem.stiffness().mul_vec(&v2))?;
        let mut v = Vec::with_capacity(n);
        v.extend_from_slice(&v1);
        v.extend_from_slice(&v2);
        v.extend_from_slice(&z);
        let pv = pc.apply(&system.apply(&v)?)?;
        let scaled: Vec<f64> = v.iter().map(|x| lambda * x).collect();
        max_nonunit_residual = max_nonunit_residual.max(dist2(&pv, &scaled) / norm2(&v));
    }
    if max_nonunit_residual > 1e-8 {
        return Err(Error::Verification(format!(
            "non-unit eigenpair residual {max_nonunit_residual:.3e} exceeds 1e-8"
        )));
    }

    let bounds = SpectralBounds::for_problem(problem);
    let all_within = nonunit_values
        .iter()
        .all(|&v| bounds.contains(v, BOUND_SLACK));
    Ok(SpectrumReport {
        unit_count,
        nonunit_values,
        bounds,
        all_within,
        rank_of_shifted: rank,
        max_unit_residual,
        max_nonunit_residual,
    })
}

/// Range statistics of Rayleigh quotients over random unit vectors, checked
/// against the closed-form mass and stiffness intervals.
#[derive(Debug, Clone)]
pub struct RayleighReport {
    pub samples: usize,
    /// Observed `x'Mx / x'x` range.
    pub mass_range: (f64, f64),
    /// Observed `x'Kx / x'x` range.
    pub stiffness_range: (f64, f64),
    /// Claimed interval `[h^2/9, h^2]`.
    pub mass_bounds: (f64, f64),
    /// Claimed interval `[2 pi^2 h^2, 4]`.
    pub stiffness_bounds: (f64, f64),
    pub mass_ok: bool,
    pub stiffness_ok: bool,
}

/// Samples Rayleigh quotients of `M` and `K` on random unit vectors.
pub fn rayleigh_report(problem: &DiscreteProblem, samples: usize, seed: u64) -> RayleighReport {
    let m = problem.state_dim();
    let h = problem.grid().h();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mass_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut stiffness_range = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xx = dot(&x, &x);
        let rm = dot(&x, &problem.mass().mul_vec(&x)) / xx;
        let rk = dot(&x, &problem.stiffness().mul_vec(&x)) / xx;
        mass_range = (mass_range.0.min(rm), mass_range.1.max(rm));
        stiffness_range = (stiffness_range.0.min(rk), stiffness_range.1.max(rk));
    }
    let mass_bounds = (SpectralBounds::C1 * h * h, SpectralBounds::C2 * h * h);
    let stiffness_bounds = (SpectralBounds::D1 * h * h, SpectralBounds::D2);
    RayleighReport {
        samples,
        mass_range,
        stiffness_range,
        mass_bounds,
        stiffness_bounds,
        mass_ok: mass_range.0 >= mass_bounds.0 && mass_range.1 <= mass_bounds.1,
        stiffness_ok: stiffness_range.0 >= stiffness_bounds.0
            && stiffness_range.1 <= stiffness_bounds.1,
    }
}

/// Which operator's spectrum to dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumTarget {
    /// The saddle operator itself (symmetric indefinite).
    Original,
    /// The preconditioned operator (unit cluster plus non-unit values).
    Preconditioned,
}

impl fmt::Display for SpectrumTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectrumTarget::Original => "original",
            SpectrumTarget::Preconditioned => "preconditioned",
        })
    }
}

impl FromStr for SpectrumTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(SpectrumTarget::Original),
            "preconditioned" => Ok(SpectrumTarget::Preconditioned),
            other => Err(Error::Config(format!("unknown spectrum target: {other}"))),
        }
    }
}

/// Writes all `3m` eigenvalues ascending, one `index value` pair per line,
/// preceded by a header comment carrying the parameters.
pub fn write_spectrum<W: Write>(
    problem: &DiscreteProblem,
    target: SpectrumTarget,
    out: &mut W,
) -> Result<()> {
    let level = problem.grid().level();
    if level > MAX_VERIFY_LEVEL {
        return Err(Error::LevelOutOfRange {
            level,
            min: crate::fem::MIN_LEVEL,
            max: MAX_VERIFY_LEVEL,
        });
    }
    let m = problem.state_dim();
    let mut values = match target {
        SpectrumTarget::Original => {
            let dense = SaddleSystem::from_problem(problem).materialize().to_dense();
            jacobi_eigen(&dense)?.0
        }
        SpectrumTarget::Preconditioned => {
            let mut v = nonunit_spectrum(problem)?;
            v.extend(std::iter::repeat(1.0).take(2 * m));
            v
        }
    };
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    writeln!(
        out,
        "# level={} beta={} which={}",
        level,
        problem.beta(),
        target
    )?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{} {:.16e}", i + 1, v)?;
    }
    Ok(())
}

/// As [`write_spectrum`], into a file at `path`.
pub fn spectrum_dump(
    problem: &DiscreteProblem,
    target: SpectrumTarget,
    path: &std::path::Path,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_spectrum(problem, target, &mut out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_blocks() -> (SparseMatrix, SparseMatrix) {
        (
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap(),
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 3.0)]).unwrap(),
        )
    }

    #[test]
    fn scalar_nonunit_value_matches_the_closed_form() {
        // M = [2], K = [3], beta = 0.1: the single non-unit eigenvalue is
        // 2*beta + (M/K)^2 = 0.2 + 4/9.
        let (m, k) = scalar_blocks();
        let values = nonunit_spectrum_blocks(&m, &k, 0.1).unwrap();
        assert_eq!(values.len(), 1);
        assert!((values[0] - (0.2 + 4.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn beta_enters_only_as_a_shift() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let a = nonunit_spectrum(&p).unwrap();
        let b = nonunit_spectrum(&p.with_beta(1e-4).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y - 2.0 * (1e-2 - 1e-4)).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_matrix_is_symmetric_positive_definite() {
        let p = DiscreteProblem::assemble(3, 1e-2).unwrap();
        let s = reduced_symmetric(p.mass(), p.stiffness()).unwrap();
        assert!(s.is_symmetric(0.0), "mirrored construction must be exact");
        let (values, _) = jacobi_eigen(&s).unwrap();
        assert!(values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn bound_formulas_are_the_advertised_closed_forms() {
        let b = SpectralBounds::new(1.0 / 16.0, 1e-4);
        let h4 = (1.0f64 / 16.0).powi(4);
        assert!((b.lower() - (2e-4 + h4 / 1296.0)).abs() < 1e-18);
        let pi = std::f64::consts::PI;
        assert!((b.upper() - (2e-4 + 1.0 / (4.0 * pi.powi(4)))).abs() < 1e-18);
        assert!(b.lower() < b.upper());
    }

    #[test]
    fn bounds_and_containment_hold_on_small_grids() {
        for level in [2, 3] {
            for beta in [1e-1, 1e-2, 1e-8] {
                let p = DiscreteProblem::assemble(level, beta).unwrap();
                assert!(verify_bounds(&p).unwrap(), "bounds failed at {level}, {beta}");
                assert!(
                    verify_containment(&p).unwrap(),
                    "containment failed at {level}, {beta}"
                );
            }
        }
    }

    #[test]
    fn multiplicity_report_at_level_two() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let report = verify_unit_multiplicity(&p).unwrap();
        assert_eq!(report.rank_of_shifted, 9);
        assert_eq!(report.unit_count, 18);
        assert_eq!(report.nonunit_values.len(), 9);
        assert_eq!(report.unit_count + report.nonunit_values.len(), p.total_dim());
        assert!(report.all_within);
        assert!(report.max_unit_residual <= 1e-9);
        assert!(report.max_nonunit_residual <= 1e-8);
    }

    #[test]
    fn level_guards_reject_big_grids() {
        let p = DiscreteProblem::assemble(6, 1e-2).unwrap();
        assert!(matches!(
            nonunit_spectrum(&p),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(
            verify_unit_multiplicity(&p),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn preconditioned_dump_has_the_unit_cluster() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&p, SpectrumTarget::Preconditioned, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# level=2 beta=0.01 which=preconditioned");
        let values: Vec<f64> = lines
            .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(values.len(), 27);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(values.iter().filter(|&&v| v == 1.0).count(), 18);
    }

    #[test]
    fn original_dump_shows_an_indefinite_spectrum() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&p, SpectrumTarget::Original, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let values: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(values.len(), 27);
        assert!(values.first().unwrap() < &0.0);
        assert!(values.last().unwrap() > &0.0);
    }

    #[test]
    fn rayleigh_quotients_respect_the_closed_intervals() {
        let p = DiscreteProblem::assemble(3, 1e-2).unwrap();
        let report = rayleigh_report(&p, 200, 77);
        assert!(report.mass_ok, "{:?}", report);
        assert!(report.stiffness_ok, "{:?}", report);
    }

    #[test]
    fn perturbed_mass_violates_the_rayleigh_interval() {
        let p = DiscreteProblem::assemble(2, 1e-2).unwrap();
        let m = p.state_dim();
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..m {
            let (cols, vals) = p.mass().row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((i, j, v));
            }
            t.push((i, i, 0.1));
        }
        let bad_mass = SparseMatrix::from_triplets(m, m, &t).unwrap();
        let bad = DiscreteProblem::from_parts(
            p.beta(),
            p.grid(),
            bad_mass,
            p.stiffness().clone(),
            p.b().to_vec(),
            p.d().to_vec(),
        )
        .unwrap();
        let report = rayleigh_report(&bad, 50, 1);
        assert!(!report.mass_ok);
    }

    #[test]
    fn target_tags_round_trip() {
        for t in [SpectrumTarget::Original, SpectrumTarget::Preconditioned] {
            assert_eq!(t.to_string().parse::<SpectrumTarget>().unwrap(), t);
        }
        assert!("both".parse::<SpectrumTarget>().is_err());
    }

    #[test]
    fn chebyshev_limit_sits_below_the_exact_threshold() {
        let exact = 0.5 * (1.0 - 1.0 / (4.0 * std::f64::consts::PI.powi(4)));
        assert!(CHEBYSHEV_BETA_LIMIT < exact);
        assert_eq!(preconditioned_interval(0.1), (0.2, 1.0));
    }
}
