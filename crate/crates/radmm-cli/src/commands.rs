//! The five subcommands: orchestration, artifact writing, stdout reports,
//! and mapping of results onto the documented exit codes.

use crate::config;
use crate::output::{self, OutputWriter};
use crate::{CliError, CliResult, CommonArgs};
use radmm::consensus::{
    alg1_state_from_z, alg1_step, alg1_step_instrumented, alg2_step, alg2_step_instrumented,
    classical_admm_step, resource_counts, Alg1State, Alg2State, NodeCounters, Variant,
};
use radmm::costs::QuadraticCost;
use radmm::experiments::{
    build_problem, initial_z, mean_iters, monte_carlo, run_seeds, stability_sweep, stepsize_study,
    write_aggregate_csv, write_sweep_csv, write_trace_csv, ExperimentConfig, RunOutcome,
    TraceRecord,
};
use radmm::graph::{DirectedEdgeIndex, Graph, NodeField};
use std::time::Instant;

/// Maximum x-trajectory deviation `compare` tolerates between the explicit
/// and compact forms before reporting an equivalence violation.
const COMPARE_TOL: f64 = 1e-8;

fn io_csv(e: std::io::Error) -> CliError {
    CliError::Io(format!("formatting CSV: {e}"))
}

fn outcome_counts(runs: &[TraceRecord]) -> (u64, u64, u64) {
    let count = |o: RunOutcome| runs.iter().filter(|r| r.outcome == o).count() as u64;
    (count(RunOutcome::Converged), count(RunOutcome::Diverged), count(RunOutcome::Inconclusive))
}

/// Per-run derived seeds, rendered losslessly for the metadata file.
fn run_seeds_value(cfg: &ExperimentConfig) -> toml::Value {
    let list = (0..cfg.n_runs)
        .map(|r| {
            let s = run_seeds(cfg.seed, r, cfg.fixed_graph, cfg.fixed_costs);
            toml::Value::String(output::hex_u64(s.run))
        })
        .collect();
    toml::Value::Array(list)
}

fn fmt_mean(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.1}")
    } else {
        "n/a".to_string()
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn run(args: &CommonArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let loaded = config::load(args)?;
    let cfg = &loaded.cfg;
    let hash = output::config_hash(cfg)?;
    let writer = OutputWriter::new(&args.out)?;

    let result = monte_carlo(cfg)?;

    let mut trace = Vec::new();
    write_trace_csv(&mut trace, &result.runs).map_err(io_csv)?;
    writer.write(&format!("run-{hash}-trace.csv"), &trace)?;

    let mut agg = Vec::new();
    write_aggregate_csv(&mut agg, &result.aggregate).map_err(io_csv)?;
    writer.write(&format!("run-{hash}-aggregate.csv"), &agg)?;

    let (n_conv, n_div, n_inc) = outcome_counts(&result.runs);
    let mean_it = mean_iters(&result.runs);
    let mut meta = output::meta_table("run", &hash, &loaded, t0.elapsed().as_secs_f64())?;
    let mut res = toml::Table::new();
    res.insert("n_runs".into(), (cfg.n_runs as i64).into());
    res.insert("n_converged".into(), (n_conv as i64).into());
    res.insert("n_diverged".into(), (n_div as i64).into());
    res.insert("n_inconclusive".into(), (n_inc as i64).into());
    res.insert("mean_iters_to_target".into(), mean_it.into());
    if let Some(e) = result.aggregate.mean_rel_error.last() {
        res.insert("final_mean_rel_error".into(), (*e).into());
    }
    res.insert("run_seeds".into(), run_seeds_value(cfg));
    meta.insert("results".into(), toml::Value::Table(res));
    output::write_meta(&writer, &format!("run-{hash}-meta.toml"), &meta)?;

    println!(
        "run: {} runs ({n_conv} converged, {n_div} diverged, {n_inc} inconclusive); \
         mean iterations to {:e}: {}",
        cfg.n_runs,
        cfg.target_tol,
        fmt_mean(mean_it)
    );

    if n_div > 0 && cfg.divergence_is_unexpected() {
        return Err(CliError::UnexpectedDivergence(format!(
            "{n_div} of {} runs diverged although p = 0, alpha in (0, 1), and rho > 0",
            cfg.n_runs
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn sweep(args: &CommonArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let loaded = config::load(args)?;
    let cfg = &loaded.cfg;
    let hash = output::config_hash(cfg)?;
    let writer = OutputWriter::new(&args.out)?;

    let result = stability_sweep(cfg)?;

    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &result.cells).map_err(io_csv)?;
    writer.write(&format!("sweep-{hash}.csv"), &csv)?;

    let cell_count = |o: RunOutcome| result.cells.iter().filter(|c| c.outcome == o).count() as i64;
    let (n_conv, n_div, n_inc) = (
        cell_count(RunOutcome::Converged),
        cell_count(RunOutcome::Diverged),
        cell_count(RunOutcome::Inconclusive),
    );
    let mut meta = output::meta_table("sweep", &hash, &loaded, t0.elapsed().as_secs_f64())?;
    let mut res = toml::Table::new();
    res.insert("n_cells".into(), (result.cells.len() as i64).into());
    res.insert("n_converged".into(), n_conv.into());
    res.insert("n_diverged".into(), n_div.into());
    res.insert("n_inconclusive".into(), n_inc.into());
    res.insert("run_seeds".into(), run_seeds_value(cfg));
    meta.insert("results".into(), toml::Value::Table(res));
    let mut pts = Vec::new();
    for pt in &result.alpha_max {
        let mut t = toml::Table::new();
        t.insert("rho".into(), pt.rho.into());
        t.insert("p".into(), pt.p.into());
        // Key absent when no grid alpha was classified convergent.
        if let Some(a) = pt.alpha_max {
            t.insert("alpha_max".into(), a.into());
        }
        pts.push(toml::Value::Table(t));
    }
    meta.insert("alpha_max".into(), toml::Value::Array(pts));
    output::write_meta(&writer, &format!("sweep-{hash}-meta.toml"), &meta)?;

    println!(
        "sweep: {} cells ({n_conv} converged, {n_div} diverged, {n_inc} inconclusive)",
        result.cells.len()
    );
    for pt in &result.alpha_max {
        match pt.alpha_max {
            Some(a) => println!("  alpha_max(rho = {}, p = {}) = {a}", pt.rho, pt.p),
            None => println!(
                "  alpha_max(rho = {}, p = {}): no convergent alpha on the grid",
                pt.rho, pt.p
            ),
        }
    }

    // A lossless cell with alpha in (0, 1) must never diverge (rho > 0 was
    // already validated for the whole grid).
    if let Some(c) = result
        .cells
        .iter()
        .find(|c| c.n_diverged > 0 && c.p == 0.0 && c.alpha > 0.0 && c.alpha < 1.0)
    {
        return Err(CliError::UnexpectedDivergence(format!(
            "cell alpha = {}, rho = {}, p = 0 saw {} diverged run(s)",
            c.alpha, c.rho, c.n_diverged
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stepsize
// ---------------------------------------------------------------------------

pub fn stepsize(args: &CommonArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let loaded = config::load(args)?;
    let cfg = &loaded.cfg;
    let hash = output::config_hash(cfg)?;
    let writer = OutputWriter::new(&args.out)?;

    let result = stepsize_study(cfg)?;

    for (batch, &alpha) in result.batches.iter().zip(&result.alphas) {
        let mut agg = Vec::new();
        write_aggregate_csv(&mut agg, &batch.aggregate).map_err(io_csv)?;
        writer.write(&format!("stepsize-{hash}-alpha-{alpha}-aggregate.csv"), &agg)?;
    }

    let mut meta = output::meta_table("stepsize", &hash, &loaded, t0.elapsed().as_secs_f64())?;
    let mut res = toml::Table::new();
    res.insert(
        "alphas".into(),
        toml::Value::Array(result.alphas.iter().map(|&a| a.into()).collect()),
    );
    res.insert(
        "mean_iters_to_target".into(),
        toml::Value::Array(result.mean_iters_to_target.iter().map(|&m| m.into()).collect()),
    );
    res.insert(
        "n_diverged".into(),
        toml::Value::Array(
            result.batches.iter().map(|b| (b.n_diverged_total() as i64).into()).collect(),
        ),
    );
    res.insert("run_seeds".into(), run_seeds_value(cfg));
    meta.insert("results".into(), toml::Value::Table(res));
    output::write_meta(&writer, &format!("stepsize-{hash}-meta.toml"), &meta)?;

    println!("stepsize: mean iterations to {:e} by alpha", cfg.target_tol);
    for ((batch, &alpha), &m) in
        result.batches.iter().zip(&result.alphas).zip(&result.mean_iters_to_target)
    {
        println!("  alpha = {alpha}: {} ({} diverged)", fmt_mean(m), batch.n_diverged_total());
    }

    for (batch, &alpha) in result.batches.iter().zip(&result.alphas) {
        let n_div = batch.n_diverged_total();
        if n_div > 0 && !cfg.has_loss() && alpha > 0.0 && alpha < 1.0 {
            return Err(CliError::UnexpectedDivergence(format!(
                "{n_div} run(s) diverged at alpha = {alpha} although p = 0 and rho > 0"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

/// Max absolute elementwise gap; any non-finite difference (overflowed or
/// NaN trajectories) counts as an infinite deviation rather than vanishing
/// in a NaN comparison.
fn slice_gap(a: &[f64], b: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (u, v) in a.iter().zip(b) {
        let d = (u - v).abs();
        if !d.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(d);
    }
    worst
}

fn x_gap(a: &NodeField, b: &NodeField) -> f64 {
    slice_gap(a.as_slice(), b.as_slice())
}

fn alg1_gap(a: &Alg1State, b: &Alg1State) -> f64 {
    slice_gap(a.x.as_slice(), b.x.as_slice())
        .max(slice_gap(a.y.as_slice(), b.y.as_slice()))
        .max(slice_gap(a.w.as_slice(), b.w.as_slice()))
}

fn counters_match(
    g: &Graph,
    explicit: &[NodeCounters],
    compact: &[NodeCounters],
) -> radmm::Result<bool> {
    for i in 0..g.n_nodes() {
        let d = g.degree(i);
        let (e_u, e_s) = resource_counts(Variant::Alg1, d)?;
        let (c_u, c_s) = resource_counts(Variant::Alg2, d)?;
        if explicit[i].updated_and_sent != e_u
            || explicit[i].stored != e_s
            || compact[i].updated_and_sent != c_u
            || compact[i].stored != c_s
        {
            return Ok(false);
        }
    }
    Ok(true)
}

fn print_counts_table(g: &Graph) -> radmm::Result<()> {
    println!("per-node per-round requirements (updated-and-sent, stored):");
    println!("  node  degree  explicit x/y/w  compact x/z");
    for i in 0..g.n_nodes() {
        let d = g.degree(i);
        let (e_u, e_s) = resource_counts(Variant::Alg1, d)?;
        let (c_u, c_s) = resource_counts(Variant::Alg2, d)?;
        println!("  {i:>4}  {d:>6}  ({e_u:>2}, {e_s:>2})        ({c_u:>2}, {c_s:>2})");
    }
    Ok(())
}

pub fn compare(args: &CommonArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let loaded = config::load(args)?;
    let cfg = &loaded.cfg;
    if cfg.has_loss() {
        return Err(CliError::Validation(
            "p: compare co-simulates the lossless forms; set p = 0 (and no p_edges)".to_string(),
        ));
    }
    let hash = output::config_hash(cfg)?;
    let writer = OutputWriter::new(&args.out)?;

    // One deterministic problem: the seeds of run 0.
    let seeds = run_seeds(cfg.seed, 0, cfg.fixed_graph, cfg.fixed_costs);
    let (g, idx, costs): (Graph, DirectedEdgeIndex, Vec<QuadraticCost>) =
        build_problem(cfg, &seeds)?;
    let dim = costs[0].dim();
    let z0 = initial_z(&idx, dim, cfg.init_scale, seeds.init);

    let s1_0 = alg1_state_from_z(&z0, &g, &idx, &costs, cfg.rho)?;
    let s2_0 = Alg2State::from_z(z0.clone(), &g, &idx, &costs, cfg.rho)?;

    let rounds = cfg.max_iters;
    let mut s1 = s1_0.clone();
    let mut s2 = s2_0.clone();
    let mut max_dev: f64 = 0.0;
    for _ in 0..rounds {
        max_dev = max_dev.max(x_gap(&s1.x, &s2.x));
        s1 = alg1_step(&s1, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
        let (next, _messages) = alg2_step(&s2, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
        s2 = next;
    }
    max_dev = max_dev.max(x_gap(&s1.x, &s2.x));

    // At alpha = 1/2 the explicit form must coincide with the classical-ADMM
    // specialization exactly (the cancelled terms carry a zero factor).
    let classical_dev = if cfg.alpha == 0.5 {
        let mut sa = s1_0.clone();
        let mut sb = s1_0.clone();
        let mut worst: f64 = 0.0;
        for _ in 0..rounds {
            sa = alg1_step(&sa, &g, &idx, &costs, 0.5, cfg.rho)?;
            sb = classical_admm_step(&sb, &g, &idx, &costs, cfg.rho)?;
            worst = worst.max(alg1_gap(&sa, &sb));
        }
        Some(worst)
    } else {
        None
    };

    let (_, counters1) = alg1_step_instrumented(&s1_0, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
    let (_, _, counters2) = alg2_step_instrumented(&s2_0, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
    let counters_ok = counters_match(&g, &counters1, &counters2)?;

    println!(
        "compare: {} nodes, {} edges, alpha = {}, rho = {}, {rounds} rounds",
        g.n_nodes(),
        g.n_edges(),
        cfg.alpha,
        cfg.rho
    );
    println!("max |x_explicit - x_compact| over the trajectory = {max_dev:.3e}");
    if let Some(d) = classical_dev {
        println!("alpha = 0.5: max deviation from the classical-ADMM specialization = {d:.3e}");
    }
    print_counts_table(&g)?;
    println!(
        "instrumented round counters {} the degree formulas",
        if counters_ok { "match" } else { "DEVIATE FROM" }
    );

    let mut meta = output::meta_table("compare", &hash, &loaded, t0.elapsed().as_secs_f64())?;
    let mut res = toml::Table::new();
    res.insert("n_nodes".into(), (g.n_nodes() as i64).into());
    res.insert("n_edges".into(), (g.n_edges() as i64).into());
    res.insert("rounds".into(), (rounds as i64).into());
    res.insert("max_deviation".into(), max_dev.into());
    res.insert("tolerance".into(), COMPARE_TOL.into());
    if let Some(d) = classical_dev {
        res.insert("classical_admm_deviation".into(), d.into());
    }
    res.insert("counters_match".into(), counters_ok.into());
    res.insert("graph_seed".into(), toml::Value::String(output::hex_u64(seeds.graph)));
    res.insert("cost_seed".into(), toml::Value::String(output::hex_u64(seeds.cost)));
    res.insert("init_seed".into(), toml::Value::String(output::hex_u64(seeds.init)));
    meta.insert("results".into(), toml::Value::Table(res));
    output::write_meta(&writer, &format!("compare-{hash}-meta.toml"), &meta)?;

    if !counters_ok {
        return Err(CliError::Equivalence(
            "instrumented resource counters deviate from the degree formulas".to_string(),
        ));
    }
    if !(max_dev <= COMPARE_TOL) {
        return Err(CliError::Equivalence(format!(
            "explicit and compact forms deviate by {max_dev:.3e} (> {COMPARE_TOL:e})"
        )));
    }
    if let Some(d) = classical_dev {
        if !(d <= COMPARE_TOL) {
            return Err(CliError::Equivalence(format!(
                "classical-ADMM specialization deviates by {d:.3e} (> {COMPARE_TOL:e})"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// counts
// ---------------------------------------------------------------------------

pub fn counts(args: &CommonArgs) -> CliResult<()> {
    let loaded = config::load(args)?;
    let cfg = &loaded.cfg;
    let seeds = run_seeds(cfg.seed, 0, cfg.fixed_graph, cfg.fixed_costs);
    let (g, idx, costs) = build_problem(cfg, &seeds)?;

    println!("graph: {} nodes, {} edges", g.n_nodes(), g.n_edges());
    print_counts_table(&g)?;
    let (tot_e_u, tot_e_s, tot_c_u, tot_c_s) = {
        let mut t = (0, 0, 0, 0);
        for i in 0..g.n_nodes() {
            let d = g.degree(i);
            let (e_u, e_s) = resource_counts(Variant::Alg1, d)?;
            let (c_u, c_s) = resource_counts(Variant::Alg2, d)?;
            t = (t.0 + e_u, t.1 + e_s, t.2 + c_u, t.3 + c_s);
        }
        t
    };
    println!("totals: explicit ({tot_e_u}, {tot_e_s}), compact ({tot_c_u}, {tot_c_s})");

    // Cross-check the formulas against one instrumented round on this graph.
    let dim = costs[0].dim();
    let s1 = Alg1State::zeros(&g, &idx, dim);
    let s2 = Alg2State::zeros(&g, &idx, &costs, cfg.rho, dim)?;
    let (_, counters1) = alg1_step_instrumented(&s1, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
    let (_, _, counters2) = alg2_step_instrumented(&s2, &g, &idx, &costs, cfg.alpha, cfg.rho)?;
    if !counters_match(&g, &counters1, &counters2)? {
        return Err(CliError::Equivalence(
            "instrumented resource counters deviate from the degree formulas".to_string(),
        ));
    }
    println!("instrumented round counters match the degree formulas at every node");
    Ok(())
}
