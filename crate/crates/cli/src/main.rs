//! Benchmark driver for the saddle-point control-problem solvers.
//!
//! The default action runs the (beta, level, preconditioner) experiment
//! matrix and prints an iteration-count table in Markdown or CSV. Three
//! alternative actions are available: `--verify` runs the spectral and
//! preconditioner verification suite, `--dump-spectrum` writes the
//! eigenvalues of a single configured system, and `--export-system` writes
//! the assembled matrix and right-hand side in Matrix Market format.
//!
//! Exit codes: 0 on success, 1 when a verification check fails (or a run
//! fails at execution time), 2 for configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;
use pdeopt::fem::DiscreteProblem;
use pdeopt::harness::{self, ExperimentConfig, OutputFormat};
use pdeopt::krylov::{self, SolverMethod};
use pdeopt::precond::{self, PreconditionerKind, SubSolveMode};
use pdeopt::saddle::SaddleSystem;
use pdeopt::sparse::market::{self, MarketSymmetry};
use pdeopt::spectral::{self, SpectrumTarget};
use pdeopt::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "pdeopt",
    version,
    about = "Iteration-count benchmarks and spectral verification for block-preconditioned saddle-point systems",
    after_help = "Environment:\n  PDEOPT_WORKERS   number of worker threads for the experiment matrix\n\nExit codes:\n  0  success\n  1  verification failure or run-time failure\n  2  configuration error"
)]
struct Args {
    /// Comma-separated regularization weights (default 1e-1 down to 1e-10).
    #[arg(long = "beta", value_delimiter = ',', value_name = "LIST")]
    beta: Option<Vec<f64>>,

    /// Comma-separated grid refinement levels; the mesh width is 2^-level.
    #[arg(long = "level", value_delimiter = ',', value_name = "LIST")]
    level: Option<Vec<u32>>,

    /// Comma-separated preconditioner kinds, or "all" for the whole catalog.
    #[arg(long = "precond", value_delimiter = ',', value_name = "LIST")]
    precond: Option<Vec<String>>,

    /// Krylov method: gmres, fgmres or chebyshev.
    #[arg(long, default_value = "gmres", value_parser = parse_solver)]
    solver: SolverMethod,

    /// Sub-system solve mode: "exact" (Cholesky) or "ict" (PCG with an
    /// incomplete-Cholesky preconditioner). Defaults to the mode paired
    /// with the chosen solver.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,

    /// Relative residual tolerance for the outer iteration.
    #[arg(long, default_value_t = krylov::DEFAULT_TOLERANCE)]
    tol: f64,

    /// Outer iteration cap (further limited by the system order).
    #[arg(long = "maxit-cap", default_value_t = krylov::DEFAULT_MAX_ITERATIONS)]
    maxit_cap: usize,

    /// Inner PCG residual-reduction tolerance (ict mode only).
    #[arg(long = "inner-tol", value_name = "TOL")]
    inner_tol: Option<f64>,

    /// Inner PCG iteration cap (ict mode only).
    #[arg(long = "inner-cap", value_name = "N")]
    inner_cap: Option<usize>,

    /// Drop tolerance for the incomplete Cholesky factor (ict mode only).
    #[arg(long = "droptol", value_name = "TAU")]
    droptol: Option<f64>,

    /// Report format: markdown or csv.
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: OutputFormat,

    /// Write the report (or spectrum dump) to this file instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Dump the eigenvalues of the configured system ("original" or
    /// "preconditioned"); requires exactly one --beta and one --level.
    #[arg(
        long = "dump-spectrum",
        value_name = "WHICH",
        value_parser = parse_target,
        conflicts_with_all = ["export_system", "verify"]
    )]
    dump_spectrum: Option<SpectrumTarget>,

    /// Write the assembled system as <PREFIX>.mtx and <PREFIX>.rhs.mtx;
    /// requires exactly one --beta and one --level.
    #[arg(long = "export-system", value_name = "PREFIX", conflicts_with = "verify")]
    export_system: Option<PathBuf>,

    /// Run the spectral/preconditioner verification suite instead of the
    /// experiment matrix (levels are capped at 4).
    #[arg(long)]
    verify: bool,

    /// Seed for the randomized verification checks.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Permit level 7 runs (default ceiling is level 6).
    #[arg(long = "allow-level-7")]
    allow_level_7: bool,
}

fn parse_solver(s: &str) -> Result<SolverMethod> {
    SolverMethod::from_str(s)
}

fn parse_format(s: &str) -> Result<OutputFormat> {
    OutputFormat::from_str(s)
}

fn parse_target(s: &str) -> Result<SpectrumTarget> {
    SpectrumTarget::from_str(s)
}

fn parse_kinds(tokens: &[String]) -> Result<Vec<PreconditionerKind>> {
    let mut kinds = Vec::new();
    for token in tokens {
        if token.trim().eq_ignore_ascii_case("all") {
            kinds.extend(PreconditionerKind::catalog());
        } else {
            kinds.push(PreconditionerKind::from_str(token)?);
        }
    }
    Ok(kinds)
}

/// Resolves the sub-solve mode from the flags, pairing it with the solver
/// when `--mode` is absent.
fn resolve_mode(args: &Args) -> Result<SubSolveMode> {
    let token = match &args.mode {
        Some(t) => t.trim().to_ascii_lowercase(),
        None => match args.solver {
            SolverMethod::Fgmres => "ict".into(),
            _ => "exact".into(),
        },
    };
    let exact = match token.as_str() {
        "exact" | "cholesky" => true,
        "ict" | "pcg" | "pcg-ict" | "inexact" => false,
        other => {
            return Err(Error::Config(format!(
                "unknown sub-solve mode: {other} (expected exact or ict)"
            )))
        }
    };
    if exact {
        if args.inner_tol.is_some() || args.inner_cap.is_some() || args.droptol.is_some() {
            return Err(Error::Config(
                "--inner-tol/--inner-cap/--droptol apply only to the ict mode".into(),
            ));
        }
        return Ok(SubSolveMode::ExactCholesky);
    }
    Ok(SubSolveMode::PcgIct {
        tolerance: args.inner_tol.unwrap_or(precond::DEFAULT_INNER_TOLERANCE),
        cap: args.inner_cap.unwrap_or(precond::DEFAULT_INNER_CAP),
        drop_tolerance: args.droptol.unwrap_or(precond::DEFAULT_DROP_TOLERANCE),
    })
}

/// The single (beta, level) pair demanded by the dump and export actions.
fn single_cell(args: &Args) -> Result<(f64, u32)> {
    let betas = args.beta.as_deref().unwrap_or_default();
    let levels = args.level.as_deref().unwrap_or_default();
    if betas.len() != 1 || levels.len() != 1 {
        return Err(Error::Config(
            "this action needs exactly one --beta and one --level".into(),
        ));
    }
    Ok((betas[0], levels[0]))
}

fn write_output(args: &Args, text: &str) -> Result<()> {
    match &args.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(text.as_bytes())?;
            f.flush()?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_verify(args: &Args) -> Result<ExitCode> {
    let levels: Vec<u32> = args.level.clone().unwrap_or_else(|| vec![2, 3]);
    let betas: Vec<f64> = args
        .beta
        .clone()
        .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-4, 1e-8]);
    let report = harness::verify_all(&levels, &betas, args.seed)?;
    write_output(args, &format!("{report}\n"))?;
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn run_dump(args: &Args, target: SpectrumTarget) -> Result<ExitCode> {
    let (beta, level) = single_cell(args)?;
    let problem = DiscreteProblem::assemble(level, beta)?;
    match &args.out {
        Some(path) => spectral::spectrum_dump(&problem, target, path)?,
        None => {
            let mut buf = Vec::new();
            spectral::write_spectrum(&problem, target, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_export(args: &Args, prefix: &PathBuf) -> Result<ExitCode> {
    let (beta, level) = single_cell(args)?;
    let problem = DiscreteProblem::assemble(level, beta)?;
    let system = SaddleSystem::from_problem(&problem);
    let matrix_path = prefix.with_extension("mtx");
    let rhs_path = prefix.with_extension("rhs.mtx");
    let mut f = BufWriter::new(File::create(&matrix_path)?);
    market::write_matrix(&mut f, &system.materialize(), MarketSymmetry::Symmetric)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(&rhs_path)?);
    market::write_vector(&mut f, "rhs", &system.rhs())?;
    f.flush()?;
    eprintln!(
        "wrote {} and {}",
        matrix_path.display(),
        rhs_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_matrix(args: &Args) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig {
        solver: args.solver,
        mode: resolve_mode(args)?,
        tolerance: args.tol,
        maxit_cap: args.maxit_cap,
        seed: args.seed,
        allow_level_7: args.allow_level_7,
        ..ExperimentConfig::default()
    };
    if let Some(betas) = &args.beta {
        cfg.betas = betas.clone();
    }
    if let Some(levels) = &args.level {
        cfg.levels = levels.clone();
    }
    if let Some(tokens) = &args.precond {
        cfg.kinds = parse_kinds(tokens)?;
    }
    let cells = harness::run_matrix(&cfg)?;
    let report = harness::render(&cells, args.format)?;
    write_output(args, &report)?;
    Ok(ExitCode::SUCCESS)
}

fn run(args: &Args) -> Result<ExitCode> {
    if args.verify {
        run_verify(args)
    } else if let Some(target) = args.dump_spectrum {
        run_dump(args, target)
    } else if let Some(prefix) = args.export_system.clone() {
        run_export(args, &prefix)
    } else {
        run_matrix(args)
    }
}

/// Maps library errors onto the documented exit codes: configuration
/// problems exit 2, everything that fails at run time exits 1.
fn classify(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::LevelOutOfRange { .. }
        | Error::Parse(_)
        | Error::DimensionMismatch(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
