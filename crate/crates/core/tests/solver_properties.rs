//! Solver-level invariants checked on assembled systems: residual
//! identities, monotonicity, finite-termination consequences of the
//! clustered spectrum, and Arnoldi basis quality, plus randomized
//! small-system properties.

use pdeopt::fem::DiscreteProblem;
use pdeopt::krylov::{fgmres_traced, gmres, gmres_traced, SolverConfig};
use pdeopt::precond::{Preconditioner, PreconditionerKind, SubSolveMode};
use pdeopt::saddle::SaddleSystem;
use pdeopt::vecops::{dist2, dot, norm2};
use proptest::prelude::*;

fn identity_prec(r: &[f64]) -> pdeopt::Result<(Vec<f64>, usize)> {
    Ok((r.to_vec(), 0))
}

struct Setup {
    system: SaddleSystem,
    pc: Preconditioner,
}

fn setup(level: u32, beta: f64, kind: PreconditionerKind) -> Setup {
    let problem = DiscreteProblem::assemble(level, beta).unwrap();
    let system = SaddleSystem::from_problem(&problem);
    let pc = Preconditioner::build(kind, &problem, SubSolveMode::exact()).unwrap();
    Setup { system, pc }
}

/// Right preconditioning keeps the Krylov recurrence in the untransformed
/// residual, so the Givens estimate must track the true residual of every
/// traced iterate to 1e-10 relative.
#[test]
fn givens_estimate_equals_true_residual_per_iteration() {
    for (level, beta, kind) in [
        (3u32, 1e-2, PreconditionerKind::New),
        (3, 1e-6, PreconditionerKind::D),
        (2, 1e-4, PreconditionerKind::C),
    ] {
        let s = setup(level, beta, kind);
        let rhs = s.system.rhs();
        let rhs_norm = norm2(&rhs);
        let config = SolverConfig::for_dim(s.system.total_dim());
        let (_, report, trace) = gmres_traced(
            |v| s.system.apply(v).unwrap(),
            |r| s.pc.apply_counted(r).map(|(z, st)| (z, st.inner_iterations)),
            &rhs,
            &config,
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(trace.iterates.len(), report.iterations);
        for (k, x) in trace.iterates.iter().enumerate() {
            let true_rel = s.system.true_residual(x).unwrap() / rhs_norm;
            let estimated = report.relative_residuals[k + 1];
            assert!(
                (true_rel - estimated).abs() <= 1e-10 + 1e-10 * true_rel.max(estimated),
                "({kind}, level {level}): iteration {k} estimate {estimated:.3e} vs true {true_rel:.3e}"
            );
        }
    }
}

#[test]
fn residual_histories_never_increase() {
    for (level, beta, kind) in [
        (2u32, 1e-1, PreconditionerKind::New),
        (3, 1e-4, PreconditionerKind::Bs),
        (3, 1e-2, PreconditionerKind::Identity),
        (4, 1e-6, PreconditionerKind::C),
    ] {
        let s = setup(level, beta, kind);
        let config = SolverConfig::for_dim(s.system.total_dim());
        let (_, report) = gmres(
            |v| s.system.apply(v).unwrap(),
            |r| s.pc.apply_counted(r).map(|(z, st)| (z, st.inner_iterations)),
            &s.system.rhs(),
            &config,
        )
        .unwrap();
        assert!(
            report
                .relative_residuals
                .windows(2)
                .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15),
            "({kind}, level {level}) history increased"
        );
    }
}

/// The coupled preconditioner leaves at most m+1 distinct eigenvalue
/// clusters, so full GMRES must finish within m+1 iterations.
#[test]
fn coupled_preconditioner_terminates_within_m_plus_one() {
    for level in [2u32, 3] {
        for beta in [1e-1, 1e-4] {
            let problem = DiscreteProblem::assemble(level, beta).unwrap();
            let m = problem.state_dim();
            let s = setup(level, beta, PreconditionerKind::New);
            let config = SolverConfig::for_dim(s.system.total_dim());
            let (_, report) = gmres(
                |v| s.system.apply(v).unwrap(),
                |r| s.pc.apply_counted(r).map(|(z, st)| (z, st.inner_iterations)),
                &s.system.rhs(),
                &config,
            )
            .unwrap();
            assert!(report.converged);
            assert!(
                report.iterations <= m + 1,
                "level {level}, beta {beta:e}: {} iterations for m = {m}",
                report.iterations
            );
        }
    }
}

/// Basis orthonormality survives long, slowly-converging runs thanks to
/// the selective reorthogonalization pass.
#[test]
fn arnoldi_basis_stays_orthonormal() {
    // (level, beta, kind, tolerance): the identity run at level 3 stresses
    // the basis with over a hundred iterations.
    for (level, beta, kind) in [
        (4u32, 1e-2, PreconditionerKind::New),
        (3, 1e-6, PreconditionerKind::Identity),
        (3, 1e-4, PreconditionerKind::Blt),
    ] {
        let s = setup(level, beta, kind);
        let config = SolverConfig::for_dim(s.system.total_dim());
        let (_, report, trace) = gmres_traced(
            |v| s.system.apply(v).unwrap(),
            |r| s.pc.apply_counted(r).map(|(z, st)| (z, st.inner_iterations)),
            &s.system.rhs(),
            &config,
        )
        .unwrap();
        assert!(report.converged, "({kind}, level {level}) must converge");
        let v = &trace.basis;
        let mut gram_defect = 0.0f64;
        for i in 0..v.len() {
            for j in 0..=i {
                let g = dot(&v[i], &v[j]) - if i == j { 1.0 } else { 0.0 };
                gram_defect += if i == j { g * g } else { 2.0 * g * g };
            }
        }
        let frobenius = gram_defect.sqrt();
        assert!(
            frobenius <= 1e-8,
            "({kind}, level {level}): basis Gram defect {frobenius:.3e} over {} vectors",
            v.len()
        );
    }
}

/// With a preconditioner that never changes, the flexible variant is
/// algebraically identical to plain GMRES.
#[test]
fn flexible_variant_reproduces_plain_gmres() {
    let s = setup(3, 1e-4, PreconditionerKind::New);
    let config = SolverConfig {
        tolerance: 1e-12,
        max_iterations: s.system.total_dim(),
    };
    let apply = |v: &[f64]| s.system.apply(v).unwrap();
    let prec = |r: &[f64]| s.pc.apply_counted(r).map(|(z, st)| (z, st.inner_iterations));
    let (xg, rg, tg) = gmres_traced(apply, prec, &s.system.rhs(), &config).unwrap();
    let (xf, rf, tf) = fgmres_traced(apply, prec, &s.system.rhs(), &config).unwrap();
    assert_eq!(rg.iterations, rf.iterations);
    assert!(dist2(&xg, &xf) <= 1e-12);
    for (a, b) in tg.iterates.iter().zip(&tf.iterates) {
        assert!(dist2(a, b) <= 1e-12);
    }
}

/// Exhausting the iteration budget reports non-convergence but still
/// returns the best iterate with a consistent final residual entry.
#[test]
fn budget_exhaustion_reports_honestly() {
    let s = setup(3, 1e-2, PreconditionerKind::Identity);
    let config = SolverConfig {
        tolerance: 1e-6,
        max_iterations: 5,
    };
    let rhs = s.system.rhs();
    let (x, report) = gmres(
        |v| s.system.apply(v).unwrap(),
        identity_prec,
        &rhs,
        &config,
    )
    .unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 5);
    let true_rel = s.system.true_residual(&x).unwrap() / norm2(&rhs);
    let reported = report.final_relative_residual();
    assert!((true_rel - reported).abs() <= 1e-12 * true_rel.max(1.0));
}

fn diag_system() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.5f64..50.0, n),
            proptest::collection::vec(-1.0f64..1.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// On random well-conditioned diagonal systems, unpreconditioned GMRES
    /// satisfies the full convergence contract.
    #[test]
    fn random_diagonal_systems_satisfy_the_contract((diag, rhs) in diag_system()) {
        let n = diag.len();
        let config = SolverConfig { tolerance: 1e-8, max_iterations: n };
        let apply = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&diag).map(|(x, d)| x * d).collect()
        };
        let (x, report) = gmres(apply, identity_prec, &rhs, &config).unwrap();
        prop_assert!(report.converged);
        // True residual against the diagonal operator.
        let residual: f64 = rhs
            .iter()
            .zip(x.iter().zip(&diag))
            .map(|(b, (xi, d))| (b - xi * d).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!(residual <= 1e-8 * norm2(&rhs) * (1.0 + 1e-8) + 1e-14);
        prop_assert!(report
            .relative_residuals
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
        // A diagonal with k distinct values needs at most k iterations.
        prop_assert!(report.iterations <= n);
    }

    /// Scaling the right-hand side scales the solution linearly (the
    /// relative stopping rule makes iteration counts scale-free).
    #[test]
    fn solutions_scale_with_the_rhs(scale in 1e-6f64..1e6, seed in 0u64..1000) {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = rhs.iter().map(|v| v * scale).collect();
        let config = SolverConfig { tolerance: 1e-10, max_iterations: n };
        let apply = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&diag).map(|(x, d)| x * d).collect()
        };
        let (x1, r1) = gmres(&apply, identity_prec, &rhs, &config).unwrap();
        let (x2, r2) = gmres(&apply, identity_prec, &scaled, &config).unwrap();
        prop_assert_eq!(r1.iterations, r2.iterations);
        let rescaled: Vec<f64> = x1.iter().map(|v| v * scale).collect();
        prop_assert!(dist2(&rescaled, &x2) <= 1e-9 * norm2(&x2).max(1e-300));
    }
}
