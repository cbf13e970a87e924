//! Acceptance gate: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`). The criteria mix
//! exact structural identities (operator algebra, form equivalence, bitwise
//! loss gating, determinism) with qualitative Monte-Carlo trends at desk
//! scale (N = 10, K <= 5000, 100 runs).

use radmm::consensus::{
    alg1_state_from_z, alg1_step, alg1_step_instrumented, alg2_step, alg2_step_instrumented,
    alg3_step, classical_admm_step, lossy_km_loss_inside, lossy_km_loss_outside, resource_counts,
    Alg1State, Alg2State, LossModel, Variant,
};
use radmm::costs::{make_random_quadratics, CostRanges, QuadraticCost};
use radmm::experiments::{
    mean_iters, monte_carlo, stability_sweep, stepsize_study, ExperimentConfig, GraphConfig,
    GraphFamily, RunOutcome, StepsizeConfig, SweepGrid,
};
use radmm::graph::{DirectedEdgeIndex, Graph};
use radmm::rng::SplitMix64;
use radmm::splitting::{prox, reflect, rprs_solve, SolveOutcome, SplittingParams};
use radmm_testutil::{gauss_solve, golden_section, minimize_fd, refine_parabolic};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::process::Command;

fn report(n: usize, desc: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("[PASS] criterion {n}: {desc}"),
        Err(_) => println!("[FAIL] criterion {n}: {desc}"),
    }
    if let Err(e) = result {
        resume_unwind(e);
    }
}

/// Random strictly-convex quadratic `0.5 x'Qx + b'x` with `Q = A'A + I`
/// (symmetric positive definite, mild conditioning).
fn random_spd_cost(rng: &mut SplitMix64, dim: usize) -> QuadraticCost {
    let a: Vec<f64> = (0..dim * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut q = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..dim {
                s += a[k * dim + i] * a[k * dim + j];
            }
            q[i * dim + j] = s;
        }
    }
    let b: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    QuadraticCost::new(q, b, 0.0).unwrap()
}

fn random_connected_graph(n: usize, seed: u64) -> (Graph, DirectedEdgeIndex) {
    let g = Graph::random_geometric(n, 0.5, seed).unwrap();
    let idx = DirectedEdgeIndex::new(&g);
    (g, idx)
}

fn scalar_costs(n: usize, seed: u64) -> Vec<QuadraticCost> {
    let ranges = CostRanges { a: (0.5, 2.0), b: (1.0, 5.0), c: (0.0, 0.0) };
    make_random_quadratics(n, seed, &ranges).unwrap()
}

fn random_alg1_state(g: &Graph, idx: &DirectedEdgeIndex, dim: usize, seed: u64) -> Alg1State {
    let mut rng = SplitMix64::new(seed);
    let mut st = Alg1State::zeros(g, idx, dim);
    for v in st.x.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    for v in st.y.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    for v in st.w.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    st
}

fn random_z(idx: &DirectedEdgeIndex, dim: usize, seed: u64) -> radmm::graph::EdgeField {
    let mut rng = SplitMix64::new(seed);
    let mut z = radmm::graph::EdgeField::zeros(idx, dim);
    for v in z.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    z
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 1. Operator core against independent minimization oracles
// ---------------------------------------------------------------------------

#[test]
fn operator_core_matches_independent_minimization_oracles() {
    report(1, "prox/reflect vs numerical oracles and the splitting solver vs closed form", || {
        let mut rng = SplitMix64::new(0xACCE_0001);
        let lambdas = [0.1, 1.0, 10.0];

        // 60 scalar instances: golden-section search plus one parabolic
        // refinement is exact (to rounding) for quadratics.
        for t in 0..60 {
            let a = rng.uniform(0.2, 3.0);
            let b = rng.uniform(-2.0, 2.0);
            let c = rng.uniform(-1.0, 1.0);
            let f = QuadraticCost::scalar(a, b, c).unwrap();
            let lambda = lambdas[t % 3];
            let v = rng.uniform(-2.0, 2.0);
            let p = prox(&f, lambda, &[v]).unwrap();
            let h = |x: f64| f.eval(&[x]) + (x - v) * (x - v) / (2.0 * lambda);
            let oracle = refine_parabolic(h, golden_section(h, -60.0, 60.0, 200), 1e-3);
            assert!((p[0] - oracle).abs() < 1e-8, "prox off oracle by {:e}", (p[0] - oracle).abs());
            let r = reflect(&f, lambda, &[v]).unwrap();
            assert!((r[0] - (2.0 * oracle - v)).abs() < 1e-8);
        }

        // 40 multivariate instances: finite-difference descent oracle with a
        // coordinate-wise parabolic polish.
        for t in 0..40 {
            let dim = 2 + t % 2;
            let f = random_spd_cost(&mut rng, dim);
            let lambda = lambdas[t % 3];
            let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let p = prox(&f, lambda, &v).unwrap();
            let h = |x: &[f64]| {
                let pen: f64 = x.iter().zip(&v).map(|(xi, vi)| (xi - vi) * (xi - vi)).sum();
                f.eval(x) + pen / (2.0 * lambda)
            };
            let mut oracle = minimize_fd(h, &v, 3000);
            for _ in 0..8 {
                for d in 0..dim {
                    let line = |s: f64| {
                        let mut y = oracle.clone();
                        y[d] = s;
                        h(&y)
                    };
                    oracle[d] = refine_parabolic(line, oracle[d], 1e-4);
                }
            }
            assert!(max_abs_diff(&p, &oracle) < 1e-8, "prox off oracle by {:e}", max_abs_diff(&p, &oracle));
            let r = reflect(&f, lambda, &v).unwrap();
            let refl_oracle: Vec<f64> = oracle.iter().zip(&v).map(|(o, vi)| 2.0 * o - vi).collect();
            assert!(max_abs_diff(&r, &refl_oracle) < 1e-8);
        }

        // Splitting solver on random strictly-convex pairs: the readout must
        // land on the closed-form minimizer of f + g.
        for t in 0..30 {
            let dim = 1 + t % 3;
            let f = random_spd_cost(&mut rng, dim);
            let g = random_spd_cost(&mut rng, dim);
            let rho = lambdas[t % 3];
            let alpha = rng.uniform(0.1, 0.9);
            let params = SplittingParams::new(alpha, rho, 60_000, 1e-13).unwrap();
            let z0: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let res = rprs_solve(&f, &g, &params, &z0).unwrap();
            assert!(matches!(res.outcome, SolveOutcome::Converged { .. }));
            let qsum: Vec<f64> = f.q().iter().zip(g.q()).map(|(u, v)| u + v).collect();
            let rhs: Vec<f64> = f.b().iter().zip(g.b()).map(|(u, v)| -(u + v)).collect();
            let x_star = gauss_solve(&qsum, dim, &rhs).unwrap();
            assert!(
                max_abs_diff(&res.x, &x_star) < 1e-8,
                "solver missed the closed form by {:e} (alpha = {alpha}, rho = {rho})",
                max_abs_diff(&res.x, &x_star)
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 2. Half-step reduction to the classical specialization
// ---------------------------------------------------------------------------

#[test]
fn half_step_reduces_to_the_classical_admm_specialization() {
    report(2, "alpha = 1/2 coincides with the cancelled-term specialization within 1e-12", || {
        let rhos = [0.1, 1.0, 10.0];
        for t in 0..10u64 {
            let (g, idx) = random_connected_graph(10, 0x2000 + t);
            let costs = scalar_costs(10, 0x2100 + t);
            let rho = rhos[t as usize % 3];
            let mut sa = random_alg1_state(&g, &idx, 1, 0x2200 + t);
            let mut sb = sa.clone();
            for _ in 0..50 {
                sa = alg1_step(&sa, &g, &idx, &costs, 0.5, rho).unwrap();
                sb = classical_admm_step(&sb, &g, &idx, &costs, rho).unwrap();
                let gap = max_abs_diff(sa.x.as_slice(), sb.x.as_slice())
                    .max(max_abs_diff(sa.y.as_slice(), sb.y.as_slice()))
                    .max(max_abs_diff(sa.w.as_slice(), sb.w.as_slice()));
                assert!(gap <= 1e-12, "specialization gap {gap:e}");
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 3. Explicit/compact form equivalence under the embedding
// ---------------------------------------------------------------------------

#[test]
fn explicit_and_compact_forms_share_x_trajectories_under_the_embedding() {
    report(3, "x-trajectories agree within 1e-10 over 100 rounds on 20 random graphs", || {
        let mut rng = SplitMix64::new(0xACCE_0003);
        let rhos = [0.1, 1.0, 10.0];
        for t in 0..20u64 {
            let (g, idx) = random_connected_graph(10, 0x3000 + t);
            let dim = 1 + (t as usize) % 2;
            let costs: Vec<QuadraticCost> = if dim == 1 {
                scalar_costs(10, 0x3100 + t)
            } else {
                let mut crng = SplitMix64::new(0x3200 + t);
                (0..10).map(|_| random_spd_cost(&mut crng, dim)).collect()
            };
            let rho = rhos[t as usize % 3];
            let alpha = rng.uniform(0.1, 1.0);
            let z0 = random_z(&idx, dim, 0x3300 + t);
            let mut s1 = alg1_state_from_z(&z0, &g, &idx, &costs, rho).unwrap();
            let mut s2 = Alg2State::from_z(z0, &g, &idx, &costs, rho).unwrap();
            for k in 0..=100 {
                let gap = max_abs_diff(s1.x.as_slice(), s2.x.as_slice());
                assert!(gap < 1e-10, "round {k}: x-gap {gap:e} (alpha = {alpha}, rho = {rho})");
                if k == 100 {
                    break;
                }
                s1 = alg1_step(&s1, &g, &idx, &costs, alpha, rho).unwrap();
                let (next, _) = alg2_step(&s2, &g, &idx, &costs, alpha, rho).unwrap();
                s2 = next;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 4. Resource counters
// ---------------------------------------------------------------------------

#[test]
fn instrumented_resource_counters_match_the_degree_formulas() {
    report(4, "per-node counters equal (2d+1, 3d) explicit and (d+1, d) compact on 10 graphs", || {
        for t in 0..10u64 {
            let n = 5 + (t as usize) % 8;
            let g = Graph::random_geometric(n, 0.6, 0x4000 + t).unwrap();
            let idx = DirectedEdgeIndex::new(&g);
            let costs = scalar_costs(n, 0x4100 + t);
            let s1 = random_alg1_state(&g, &idx, 1, 0x4200 + t);
            let (_, c1) = alg1_step_instrumented(&s1, &g, &idx, &costs, 0.7, 1.0).unwrap();
            let s2 = Alg2State::zeros(&g, &idx, &costs, 1.0, 1).unwrap();
            let (_, _, c2) = alg2_step_instrumented(&s2, &g, &idx, &costs, 0.7, 1.0).unwrap();
            for i in 0..n {
                let d = g.degree(i);
                assert_eq!((c1[i].updated_and_sent, c1[i].stored), (2 * d + 1, 3 * d));
                assert_eq!((c2[i].updated_and_sent, c2[i].stored), (d + 1, d));
                assert_eq!(resource_counts(Variant::Alg1, d).unwrap(), (2 * d + 1, 3 * d));
                assert_eq!(resource_counts(Variant::Alg3, d).unwrap(), (d + 1, d));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 5. Loss degeneracies
// ---------------------------------------------------------------------------

#[test]
fn zero_loss_is_bitwise_lossless_and_full_loss_freezes() {
    report(5, "p = 0 reproduces the lossless form bit-for-bit over 1000 rounds; p = 1 freezes", || {
        let (g, idx) = random_connected_graph(10, 0x5000);
        let costs = scalar_costs(10, 0x5100);
        let (alpha, rho) = (0.8, 1.0);
        let z0 = random_z(&idx, 1, 0x5200);
        let mut a2 = Alg2State::from_z(z0, &g, &idx, &costs, rho).unwrap();
        let mut a3 = a2.clone();
        let loss0 = LossModel::uniform(0.0, 0x5300).unwrap();
        for k in 0..1000 {
            let (next, _) = alg2_step(&a2, &g, &idx, &costs, alpha, rho).unwrap();
            a2 = next;
            a3 = alg3_step(&a3, &g, &idx, &costs, alpha, rho, &loss0, k).unwrap();
            for (u, v) in a2.z.as_slice().iter().zip(a3.z.as_slice()) {
                assert_eq!(u.to_bits(), v.to_bits(), "z diverged bitwise at round {k}");
            }
            for (u, v) in a2.x.as_slice().iter().zip(a3.x.as_slice()) {
                assert_eq!(u.to_bits(), v.to_bits(), "x diverged bitwise at round {k}");
            }
        }

        let loss1 = LossModel::uniform(1.0, 0x5400).unwrap();
        let frozen = a3.clone();
        for k in 0..1000 {
            a3 = alg3_step(&a3, &g, &idx, &costs, alpha, rho, &loss1, k).unwrap();
            for (u, v) in frozen.z.as_slice().iter().zip(a3.z.as_slice()) {
                assert_eq!(u.to_bits(), v.to_bits(), "p = 1 moved z at round {k}");
            }
            for (u, v) in frozen.x.as_slice().iter().zip(a3.x.as_slice()) {
                assert_eq!(u.to_bits(), v.to_bits(), "p = 1 moved x at round {k}");
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 6. Loss-gating ordering identity
// ---------------------------------------------------------------------------

#[test]
fn loss_gating_commutes_with_the_km_average_exactly() {
    report(6, "gating before vs inside the averaged update is element-wise exact, 1000 triples", || {
        let mut rng = SplitMix64::new(0xACCE_0006);
        for _ in 0..1000 {
            let n = 4 + (rng.next_u64() % 6) as usize;
            let z: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let a: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let t_z: Vec<f64> = (0..n)
                .map(|i| b[i] + (0..n).map(|j| a[i * n + j] * z[j]).sum::<f64>())
                .collect();
            let lost: Vec<bool> = (0..n).map(|_| rng.next_u64() % 2 == 0).collect();
            let alpha = rng.uniform(0.05, 1.0);
            let outside = lossy_km_loss_outside(&z, &t_z, &lost, alpha);
            let inside = lossy_km_loss_inside(&z, &t_z, &lost, alpha);
            for (u, v) in outside.iter().zip(&inside) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Shared configs for the Monte-Carlo trend criteria
// ---------------------------------------------------------------------------

fn trend_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.variant = 3;
    cfg.n_runs = 100;
    cfg.max_iters = 5000;
    cfg.seed = seed;
    cfg.graph = GraphConfig {
        family: GraphFamily::RandomGeometric,
        n: 10,
        radius: 0.5,
        allow_sparse_radius: false,
    };
    cfg.costs.a_range = [0.5, 2.0];
    cfg.costs.b_range = [1.0, 5.0];
    cfg
}

// ---------------------------------------------------------------------------
// 7. Guaranteed-region convergence under loss
// ---------------------------------------------------------------------------

#[test]
fn guaranteed_region_cells_all_converge_under_loss() {
    report(7, "alpha in (0,1) grid x rho {0.1,1,10} x p {0,0.3,0.6}: zero divergences, <1e-6 in 5000", || {
        let mut cfg = trend_config(0xACCE_0007);
        // Denser graphs and stiffer costs keep the worst (rho, p) corner
        // inside the 5000-round budget at the 1e-6 tolerance.
        cfg.graph.radius = 0.9;
        cfg.costs.a_range = [2.0, 3.0];
        cfg.tol = 1e-6;
        cfg.sweep = Some(SweepGrid {
            alphas: (1..=9).map(|i| i as f64 / 10.0).collect(),
            rhos: vec![0.1, 1.0, 10.0],
            ps: vec![0.0, 0.3, 0.6],
        });
        let res = stability_sweep(&cfg).unwrap();
        assert_eq!(res.cells.len(), 81);
        for c in &res.cells {
            assert_eq!(c.n_diverged, 0, "cell ({}, {}, {}) diverged", c.alpha, c.rho, c.p);
            assert_eq!(
                c.outcome,
                RunOutcome::Converged,
                "cell ({}, {}, {}) is {}",
                c.alpha,
                c.rho,
                c.p,
                c.outcome
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 8. Loss slows convergence
// ---------------------------------------------------------------------------

#[test]
fn iterations_to_target_increase_with_loss_probability() {
    report(8, "mean iterations-to-1e-4 strictly increase over p in {0, 0.2, 0.4, 0.6}", || {
        let mut means = Vec::new();
        for &p in &[0.0, 0.2, 0.4, 0.6] {
            let mut cfg = trend_config(0xACCE_0008);
            cfg.alpha = 1.0;
            cfg.rho = 1.0;
            cfg.p = p;
            let mc = monte_carlo(&cfg).unwrap();
            assert_eq!(mc.n_diverged_total(), 0);
            means.push(mean_iters(&mc.runs));
        }
        println!("  mean iterations by p: {means:?}");
        for w in means.windows(2) {
            assert!(
                w[0].is_finite() && w[1].is_finite() && w[1] > w[0],
                "means not strictly increasing: {means:?}"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 9. The stability boundary grows with loss
// ---------------------------------------------------------------------------

#[test]
fn stability_region_boundary_grows_with_loss() {
    report(9, "alpha_max non-decreasing over p in {0, 0.3, 0.6} at rho = 1, with alpha_max(0) >= 0.9", || {
        let mut cfg = trend_config(0xACCE_0009);
        // The grid deliberately extends beyond alpha = 1 so the enlarged
        // lossy stability region is visible.
        cfg.sweep = Some(SweepGrid {
            alphas: (1..=16).map(|i| i as f64 / 10.0).collect(),
            rhos: vec![1.0],
            ps: vec![0.0, 0.3, 0.6],
        });
        let res = stability_sweep(&cfg).unwrap();
        assert_eq!(res.alpha_max.len(), 3);
        let values: Vec<f64> = res
            .alpha_max
            .iter()
            .map(|pt| pt.alpha_max.expect("some alpha must be convergent"))
            .collect();
        println!("  alpha_max by p: {values:?}");
        assert!(values[0] >= 0.9 - 1e-12, "alpha_max(p = 0) = {} < 0.9", values[0]);
        assert!(values[1] >= values[0] - 1e-12 && values[2] >= values[1] - 1e-12,
            "alpha_max not non-decreasing: {values:?}");
    });
}

// ---------------------------------------------------------------------------
// 10. Larger relaxation steps help under heavy loss
// ---------------------------------------------------------------------------

#[test]
fn larger_steps_converge_faster_under_heavy_loss() {
    report(10, "mean iterations-to-1e-4 non-increasing over alpha in {0.3,...,0.9} at p = 0.6", || {
        let mut cfg = trend_config(0xACCE_000A);
        cfg.rho = 1.0;
        cfg.p = 0.6;
        cfg.stepsize = Some(StepsizeConfig { alphas: vec![0.3, 0.5, 0.7, 0.9] });
        let res = stepsize_study(&cfg).unwrap();
        let means = &res.mean_iters_to_target;
        println!("  mean iterations by alpha: {means:?}");
        for w in means.windows(2) {
            assert!(
                w[0].is_finite() && w[1].is_finite() && w[1] <= w[0],
                "means not non-increasing: {means:?}"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 11. Determinism across host parallelism
// ---------------------------------------------------------------------------

#[test]
fn csv_outputs_are_byte_identical_across_thread_counts() {
    report(11, "run and sweep CSVs identical with 1 vs 8 worker threads", || {
        let dir = tempfile::tempdir().unwrap();
        let run_cfg = dir.path().join("run.toml");
        std::fs::write(
            &run_cfg,
            "version = 1\nvariant = 3\nalpha = 1.0\nrho = 1.0\np = 0.6\nn_runs = 40\nseed = 11\n\n\
             [graph]\nfamily = \"random_geometric\"\nn = 10\nradius = 0.5\n\n\
             [costs]\na_range = [0.5, 2.0]\nb_range = [1.0, 5.0]\n",
        )
        .unwrap();
        let sweep_cfg = dir.path().join("sweep.toml");
        std::fs::write(
            &sweep_cfg,
            "version = 1\nvariant = 3\nn_runs = 20\nseed = 11\n\n\
             [graph]\nfamily = \"random_geometric\"\nn = 10\nradius = 0.5\n\n\
             [costs]\na_range = [0.5, 2.0]\nb_range = [1.0, 5.0]\n\n\
             [sweep]\nalphas = [0.5, 1.0]\nrhos = [1.0]\nps = [0.0, 0.6]\n",
        )
        .unwrap();

        for (cmd, cfg) in [("run", &run_cfg), ("sweep", &sweep_cfg)] {
            let mut outputs = Vec::new();
            for (label, threads) in [("t1", "1"), ("t8", "8")] {
                let out = dir.path().join(format!("{cmd}-{label}"));
                let status = Command::new(env!("CARGO_BIN_EXE_radmm"))
                    .args([cmd, "--config"])
                    .arg(cfg)
                    .arg("--out")
                    .arg(&out)
                    .env("RAYON_NUM_THREADS", threads)
                    .status()
                    .unwrap();
                assert!(status.success(), "{cmd} with {threads} thread(s) failed");
                let mut csvs: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                    .map(|p| {
                        (
                            p.file_name().unwrap().to_string_lossy().into_owned(),
                            std::fs::read(&p).unwrap(),
                        )
                    })
                    .collect();
                csvs.sort();
                assert!(!csvs.is_empty());
                outputs.push(csvs);
            }
            assert_eq!(
                outputs[0], outputs[1],
                "{cmd} CSVs differ between 1 and 8 worker threads"
            );
        }
    });
}
