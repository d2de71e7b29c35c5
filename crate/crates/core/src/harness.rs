//! Experiment driver: runs the (beta, level, kind) benchmark matrix,
//! renders iteration-count tables, and bundles the spectral verifications
//! into one pass/fail report.
//!
//! Cells of the matrix are independent solves and may run on a rayon pool
//! (the `parallel` feature, on by default); set `PDEOPT_WORKERS` to pin
//! the pool size. Each cell's solve is single-threaded, so exact-mode
//! iteration counts are identical however the cells are scheduled. Per
//! level, the blocks are assembled and factored once and shared by every
//! (beta, kind) cell.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DiscreteProblem, Grid, MIN_LEVEL};
use crate::krylov::{self, SolverConfig, SolverMethod};
use crate::precond::{Preconditioner, PreconditionerKind, SubSolveMode, SubSolvers};
use crate::saddle::SaddleSystem;
use crate::spectral;
use crate::vecops::{dist2, norm2};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Highest level the full matrix runs without the explicit opt-in.
pub const DEFAULT_LEVEL_CEILING: u32 = 6;
/// Absolute ceiling (opt-in); keeps a single cell under a few minutes.
pub const EXTENDED_LEVEL_CEILING: u32 = 7;
/// Environment variable fixing the worker-pool size.
pub const WORKERS_ENV: &str = "PDEOPT_WORKERS";

/// One experiment matrix: the cross product of weights, levels and kinds,
/// solved with one solver/mode pairing.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub betas: Vec<f64>,
    pub levels: Vec<u32>,
    pub kinds: Vec<PreconditionerKind>,
    pub solver: SolverMethod,
    pub mode: SubSolveMode,
    pub tolerance: f64,
    /// Outer-iteration cap; each cell further limits it by the system
    /// order.
    pub maxit_cap: usize,
    /// Seed for the randomized verification checks.
    pub seed: u64,
    /// Permits level 7 (the default ceiling is 6).
    pub allow_level_7: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            betas: (1..=10).map(|k| 10f64.powi(-k)).collect(),
            levels: (2..=6).collect(),
            kinds: vec![PreconditionerKind::New],
            solver: SolverMethod::Gmres,
            mode: SubSolveMode::ExactCholesky,
            tolerance: krylov::DEFAULT_TOLERANCE,
            maxit_cap: krylov::DEFAULT_MAX_ITERATIONS,
            seed: 42,
            allow_level_7: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.levels.is_empty() || self.kinds.is_empty() {
            return Err(Error::Config(
                "experiment needs at least one beta, level and preconditioner".into(),
            ));
        }
        if let Some(&b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("beta must be positive, got {b}")));
        }
        let ceiling = if self.allow_level_7 {
            EXTENDED_LEVEL_CEILING
        } else {
            DEFAULT_LEVEL_CEILING
        };
        for &level in &self.levels {
            if level < MIN_LEVEL || level > ceiling {
                return Err(Error::LevelOutOfRange {
                    level,
                    min: MIN_LEVEL,
                    max: ceiling,
                });
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.maxit_cap == 0 {
            return Err(Error::Config("iteration cap must be at least one".into()));
        }
        // The solver/mode pairings mirror how the reference experiments
        // were run: a fixed factorization suits plain GMRES, truncated
        // inner solves need the flexible variant.
        match (self.solver, self.mode.is_exact()) {
            (SolverMethod::Gmres, false) => {
                return Err(Error::Config(
                    "gmres requires the exact sub-solve mode; use fgmres with pcg-ict".into(),
                ))
            }
            (SolverMethod::Fgmres, true) => {
                return Err(Error::Config(
                    "fgmres is paired with the pcg-ict sub-solve mode; use gmres for exact".into(),
                ))
            }
            (SolverMethod::Chebyshev, false) => {
                return Err(Error::Config(
                    "chebyshev runs with exact sub-solves only".into(),
                ))
            }
            _ => {}
        }
        if self.solver == SolverMethod::Chebyshev {
            if self.kinds != vec![PreconditionerKind::New] {
                return Err(Error::Config(
                    "chebyshev applies only to the coupled preconditioner (kind `new`)".into(),
                ));
            }
            if let Some(&b) = self
                .betas
                .iter()
                .find(|&&b| b > spectral::CHEBYSHEV_BETA_LIMIT)
            {
                return Err(Error::Config(format!(
                    "chebyshev needs beta <= {}, got {b}",
                    spectral::CHEBYSHEV_BETA_LIMIT
                )));
            }
        }
        Ok(())
    }
}

/// One solved cell of the experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub beta: f64,
    pub level: u32,
    pub kind: PreconditionerKind,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub converged: bool,
    /// Failure description when the run could not be carried out at all.
    pub error: Option<String>,
}

impl TableCell {
    /// The table entry: `IT(CPU)`, or `--` for a run that did not converge.
    pub fn display_cell(&self) -> String {
        if self.error.is_some() {
            "err".to_string()
        } else if !self.converged {
            "--".to_string()
        } else {
            format!("{}({:.2})", self.iterations, self.wall_seconds)
        }
    }
}

fn run_cell(
    base: &DiscreteProblem,
    beta: f64,
    kind: PreconditionerKind,
    subs: &Arc<SubSolvers>,
    cfg: &ExperimentConfig,
) -> TableCell {
    let level = base.grid().level();
    let outcome = (|| -> Result<(usize, f64, bool)> {
        let problem = base.with_beta(beta)?;
        let system = SaddleSystem::from_problem(&problem);
        let pc = Preconditioner::with_shared(kind, beta, Arc::clone(subs))?;
        let rhs = system.rhs();
        let sc = SolverConfig {
            tolerance: cfg.tolerance,
            max_iterations: cfg.maxit_cap.min(system.total_dim()),
        };
        let op = |v: &[f64]| system.apply(v).expect("block dimensions are fixed");
        let pr = |r: &[f64]| pc.apply_counted(r).map(|(z, s)| (z, s.inner_iterations));
        let report = match cfg.solver {
            SolverMethod::Gmres => krylov::gmres(op, pr, &rhs, &sc)?.1,
            SolverMethod::Fgmres => krylov::fgmres(op, pr, &rhs, &sc)?.1,
            SolverMethod::Chebyshev => {
                let interval = spectral::preconditioned_interval(beta);
                krylov::chebyshev(op, pr, &rhs, interval, &sc)?.1
            }
        };
        Ok((report.iterations, report.wall_seconds, report.converged))
    })();
    match outcome {
        Ok((iterations, wall_seconds, converged)) => TableCell {
            beta,
            level,
            kind,
            iterations,
            wall_seconds,
            converged,
            error: None,
        },
        Err(e) => TableCell {
            beta,
            level,
            kind,
            iterations: 0,
            wall_seconds: 0.0,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

fn level_jobs(cfg: &ExperimentConfig) -> Vec<(f64, PreconditionerKind)> {
    cfg.betas
        .iter()
        .flat_map(|&b| cfg.kinds.iter().map(move |&k| (b, k)))
        .collect()
}

/// Runs the full matrix; cells are ordered level-major, then by beta, then
/// by kind. Individual cell failures are recorded in the cell, never
/// aborting the rest of the matrix.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<Vec<TableCell>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &level in &cfg.levels {
        let base = DiscreteProblem::assemble(level, cfg.betas[0])?;
        let subs = Arc::new(SubSolvers::build(base.mass(), base.stiffness(), cfg.mode)?);
        let jobs = level_jobs(cfg);
        let level_cells = map_jobs(&jobs, |&(beta, kind)| {
            run_cell(&base, beta, kind, &subs, cfg)
        });
        cells.extend(level_cells);
    }
    Ok(cells)
}

/// As [`run_matrix`], but forcing sequential cell execution regardless of
/// the `parallel` feature; the benchmark suite compares the two.
pub fn run_matrix_sequential(cfg: &ExperimentConfig) -> Result<Vec<TableCell>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &level in &cfg.levels {
        let base = DiscreteProblem::assemble(level, cfg.betas[0])?;
        let subs = Arc::new(SubSolvers::build(base.mass(), base.stiffness(), cfg.mode)?);
        for (beta, kind) in level_jobs(cfg) {
            cells.push(run_cell(&base, beta, kind, &subs, cfg));
        }
    }
    Ok(cells)
}

#[cfg(feature = "parallel")]
fn map_jobs<J: Sync, F: Fn(&J) -> TableCell + Sync>(jobs: &[J], f: F) -> Vec<TableCell> {
    use rayon::prelude::*;
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match workers.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(|| jobs.par_iter().map(&f).collect()),
        None => jobs.par_iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<J, F: Fn(&J) -> TableCell>(jobs: &[J], f: F) -> Vec<TableCell> {
    jobs.iter().map(f).collect()
}

/// Report layout for rendered tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Markdown,
    Csv,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Markdown => "markdown",
            OutputFormat::Csv => "csv",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Config(format!("unknown output format: {other}"))),
        }
    }
}

/// Renders cells in the requested format.
pub fn render(cells: &[TableCell], format: OutputFormat) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::Config("nothing to render: no cells".into()));
    }
    match format {
        OutputFormat::Markdown => Ok(render_markdown(cells)),
        OutputFormat::Csv => render_csv(cells),
    }
}

/// One table per level: rows grouped by beta, one column per kind, cells
/// `IT(CPU)` with `--` for non-converged runs.
pub fn render_markdown(cells: &[TableCell]) -> String {
    let mut levels: Vec<u32> = cells.iter().map(|c| c.level).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut out = String::new();
    for level in levels {
        let group: Vec<&TableCell> = cells.iter().filter(|c| c.level == level).collect();
        let mut kinds = Vec::new();
        let mut betas = Vec::new();
        for c in &group {
            if !kinds.contains(&c.kind) {
                kinds.push(c.kind);
            }
            if !betas.iter().any(|&b: &f64| b == c.beta) {
                betas.push(c.beta);
            }
        }
        let grid = Grid::new(level).expect("cells came from valid runs");
        out.push_str(&format!(
            "## level {level} (m = {}, n = {})\n\n",
            grid.interior_count(),
            3 * grid.interior_count()
        ));
        out.push_str("| beta |");
        for k in &kinds {
            out.push_str(&format!(" {k} |"));
        }
        out.push_str("\n| ---: |");
        for _ in &kinds {
            out.push_str(" :---: |");
        }
        out.push('\n');
        for &beta in &betas {
            out.push_str(&format!("| {beta:e} |"));
            for &kind in &kinds {
                let text = group
                    .iter()
                    .find(|c| c.beta == beta && c.kind == kind)
                    .map(|c| c.display_cell())
                    .unwrap_or_else(|| String::from(" "));
                out.push_str(&format!(" {text} |"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// One CSV record per cell; round-trips through [`read_cells_csv`].
pub fn render_csv(cells: &[TableCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for cell in cells {
        w.serialize(cell)
            .map_err(|e| Error::Parse(format!("csv serialization failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv is not utf-8: {e}")))
}

/// Reads cells back from CSV text produced by [`render_csv`].
pub fn read_cells_csv(text: &str) -> Result<Vec<TableCell>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut cells = Vec::new();
    for record in r.deserialize() {
        cells.push(record.map_err(|e| Error::Parse(format!("csv record invalid: {e}")))?);
    }
    Ok(cells)
}

/// One named verification check.
#[derive(Debug, Clone)]
pub struct NamedCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Aggregated verification outcome; `passed` iff every check passed.
#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<NamedCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: String, passed: bool, detail: String) {
        self.checks.push(NamedCheck {
            name,
            passed,
            detail,
        });
    }

    fn merge(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {} — {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        write!(
            f,
            "{}: {} of {} checks passed",
            if self.passed() { "OK" } else { "FAILED" },
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        )
    }
}

const VERIFY_MAX_LEVEL: u32 = 4;
/// Largest level at which the dense forward-identity check runs.
const FORWARD_CHECK_MAX_LEVEL: u32 = 3;

/// Runs every verification against one assembled problem.
pub fn verify_problem(problem: &DiscreteProblem, seed: u64) -> VerificationReport {
    let level = problem.grid().level();
    let beta = problem.beta();
    let tag = format!("l{level},b{beta:e}");
    let mut report = VerificationReport::default();

    if level <= VERIFY_MAX_LEVEL {
        match spectral::verify_unit_multiplicity(problem) {
            Ok(r) => report.push(
                format!("unit-multiplicity@{tag}"),
                r.unit_count == 2 * problem.state_dim(),
                format!(
                    "unit count {} (expected {}), rank {} (expected {}), residuals {:.2e}/{:.2e}",
                    r.unit_count,
                    2 * problem.state_dim(),
                    r.rank_of_shifted,
                    problem.state_dim(),
                    r.max_unit_residual,
                    r.max_nonunit_residual
                ),
            ),
            Err(e) => report.push(format!("unit-multiplicity@{tag}"), false, e.to_string()),
        }
    }

    match spectral::verify_bounds(problem) {
        Ok(ok) => {
            let bounds = spectral::SpectralBounds::for_problem(problem);
            report.push(
                format!("nonunit-bounds@{tag}"),
                ok,
                format!("interval [{:.6e}, {:.6e}]", bounds.lower(), bounds.upper()),
            );
        }
        Err(e) => report.push(format!("nonunit-bounds@{tag}"), false, e.to_string()),
    }

    if beta <= spectral::CHEBYSHEV_BETA_LIMIT {
        match spectral::verify_containment(problem) {
            Ok(ok) => report.push(
                format!("interval-containment@{tag}"),
                ok,
                format!("non-unit spectrum inside ({:e}, 1]", 2.0 * beta),
            ),
            Err(e) => report.push(format!("interval-containment@{tag}"), false, e.to_string()),
        }
    }

    let r = spectral::rayleigh_report(problem, 200, seed);
    report.push(
        format!("rayleigh-mass@{tag}"),
        r.mass_ok,
        format!(
            "observed [{:.3e}, {:.3e}] within [{:.3e}, {:.3e}]",
            r.mass_range.0, r.mass_range.1, r.mass_bounds.0, r.mass_bounds.1
        ),
    );
    report.push(
        format!("rayleigh-stiffness@{tag}"),
        r.stiffness_ok,
        format!(
            "observed [{:.3e}, {:.3e}] within [{:.3e}, {:.3e}]",
            r.stiffness_range.0, r.stiffness_range.1, r.stiffness_bounds.0, r.stiffness_bounds.1
        ),
    );

    if level <= FORWARD_CHECK_MAX_LEVEL {
        let mut worst = 0.0_f64;
        let mut worst_kind = PreconditionerKind::Identity;
        let mut failure = None;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for kind in PreconditionerKind::ALL {
            let defect = (|| -> Result<f64> {
                let pc = Preconditioner::build(kind, problem, SubSolveMode::exact())?;
                let pm = pc.materialize_dense()?;
                let mut kind_worst = 0.0_f64;
                for _ in 0..2 {
                    let r: Vec<f64> = (0..problem.total_dim())
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect();
                    let z = pc.apply(&r)?;
                    kind_worst = kind_worst.max(dist2(&pm.matvec(&z), &r) / norm2(&r));
                }
                Ok(kind_worst)
            })();
            match defect {
                Ok(d) if d > worst => {
                    worst = d;
                    worst_kind = kind;
                }
                Ok(_) => {}
                Err(e) => failure = Some(format!("{kind}: {e}")),
            }
        }
        match failure {
            None => report.push(
                format!("preconditioner-forward@{tag}"),
                worst <= 1e-10,
                format!("worst relative defect {worst:.3e} (kind {worst_kind})"),
            ),
            Some(msg) => report.push(format!("preconditioner-forward@{tag}"), false, msg),
        }
    }

    report
}

/// Verification sweep over an (levels x betas) grid; levels above 4 are
/// rejected because the checks involve dense eigenwork.
pub fn verify_all(levels: &[u32], betas: &[f64], seed: u64) -> Result<VerificationReport> {
    if levels.is_empty() || betas.is_empty() {
        return Err(Error::Config("verification needs levels and betas".into()));
    }
    if let Some(&level) = levels.iter().find(|&&l| l < MIN_LEVEL || l > VERIFY_MAX_LEVEL) {
        return Err(Error::LevelOutOfRange {
            level,
            min: MIN_LEVEL,
            max: VERIFY_MAX_LEVEL,
        });
    }
    let mut report = VerificationReport::default();
    for &level in levels {
        for &beta in betas {
            let problem = DiscreteProblem::assemble(level, beta)?;
            report.merge(verify_problem(&problem, seed));
        }
    }
    Ok(report)
}
