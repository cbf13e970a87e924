//! Monte-Carlo harness: error trajectories under packet loss, empirical
//! stability classification over an (alpha, rho, p) grid, and step-size
//! studies.
//!
//! Everything here is deterministic given the config and master seed. Each
//! run derives its sub-seeds from `(master seed, run index)` only, so the
//! same run index sees the same graph, costs, initialization, and loss
//! stream no matter which grid cell or study invoked it — paired samples
//! across parameter values for free. Runs may execute concurrently; results
//! are merged in run-index order so output is schedule-independent.

use crate::consensus::{
    alg1_lossy_step, alg1_step, alg2_step, alg3_step, Alg1LossyState, Alg1State, Alg2State,
    LossModel, Variant,
};
use crate::costs::{centralized_optimum, make_random_quadratics, CostRanges, QuadraticCost};
use crate::error::{Error, Result};
use crate::graph::{DirectedEdgeIndex, EdgeField, Graph, NodeField};
use crate::rng::{derive, SplitMix64, TAG_COST, TAG_GRAPH, TAG_INIT, TAG_LOSS, TAG_RUN};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Config schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Relative error beyond which a run is declared diverged (also triggered by
/// any non-finite iterate).
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// Denominator floor: below this the optimum is treated as zero and the
/// error is reported in absolute terms.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn d_variant() -> u64 {
    3
}
fn d_alpha() -> f64 {
    0.5
}
fn d_rho() -> f64 {
    1.0
}
fn d_max_iters() -> u64 {
    5000
}
fn d_tol() -> f64 {
    1e-8
}
fn d_target_tol() -> f64 {
    1e-4
}
fn d_n_runs() -> u64 {
    100
}
fn d_graph_n() -> usize {
    10
}
fn d_radius() -> f64 {
    0.5
}
fn d_a_range() -> [f64; 2] {
    [0.5, 2.0]
}
fn d_b_range() -> [f64; 2] {
    [-5.0, 5.0]
}

/// Full experiment description. Unknown keys are rejected at parse time
/// (fail-closed), and `version` is mandatory so stale configs fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Algorithm variant: 1 (explicit x/y/w), 2 (compact x/z), 3 (lossy).
    #[serde(default = "d_variant")]
    pub variant: u64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    /// Uniform per-directed-edge loss probability (also the default for
    /// edges not listed in `p_edges`).
    #[serde(default)]
    pub p: f64,
    /// Heterogeneous loss overrides; meaningful mainly with `fixed_graph`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_edges: Vec<EdgeLossEntry>,
    /// Round budget K per run.
    #[serde(default = "d_max_iters")]
    pub max_iters: u64,
    /// Stability-classification tolerance: relative error below this counts
    /// as converged.
    #[serde(default = "d_tol")]
    pub tol: f64,
    /// Tolerance for the iterations-to-tolerance metric.
    #[serde(default = "d_target_tol")]
    pub target_tol: f64,
    #[serde(default = "d_n_runs")]
    pub n_runs: u64,
    /// Master seed; every other seed derives from it.
    #[serde(default)]
    pub seed: u64,
    /// 0 starts from the all-zero state; a positive value draws the initial
    /// state uniformly from [-init_scale, init_scale] per coordinate.
    #[serde(default)]
    pub init_scale: f64,
    /// Reuse one graph across all Monte-Carlo runs instead of redrawing.
    #[serde(default)]
    pub fixed_graph: bool,
    /// Reuse one cost draw across all Monte-Carlo runs.
    #[serde(default)]
    pub fixed_costs: bool,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepsize: Option<StepsizeConfig>,
    /// Not part of the file schema: set only by the CLI escape-hatch flag
    /// that permits lossy runs of the explicit form.
    #[serde(skip)]
    pub allow_lossy_alg1: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            variant: d_variant(),
            alpha: d_alpha(),
            rho: d_rho(),
            p: 0.0,
            p_edges: Vec::new(),
            max_iters: d_max_iters(),
            tol: d_tol(),
            target_tol: d_target_tol(),
            n_runs: d_n_runs(),
            seed: 0,
            init_scale: 0.0,
            fixed_graph: false,
            fixed_costs: false,
            graph: GraphConfig::default(),
            costs: CostConfig::default(),
            sweep: None,
            stepsize: None,
            allow_lossy_alg1: false,
        }
    }
}

/// One heterogeneous loss override: the directed transmission `from -> to`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLossEntry {
    pub from: usize,
    pub to: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Cycle,
    RandomGeometric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default = "GraphConfig::default_family")]
    pub family: GraphFamily,
    #[serde(default = "d_graph_n")]
    pub n: usize,
    /// Connection radius of the random-geometric family (ignored by `cycle`).
    #[serde(default = "d_radius")]
    pub radius: f64,
    /// Radii below 0.3 make connected draws at small `n` rare; opting in
    /// acknowledges the retry cost instead of hiding it.
    #[serde(default)]
    pub allow_sparse_radius: bool,
}

impl GraphConfig {
    fn default_family() -> GraphFamily {
        GraphFamily::RandomGeometric
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            family: GraphFamily::RandomGeometric,
            n: d_graph_n(),
            radius: d_radius(),
            allow_sparse_radius: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Random,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "CostConfig::default_mode")]
    pub mode: CostMode,
    #[serde(default = "d_a_range")]
    pub a_range: [f64; 2],
    #[serde(default = "d_b_range")]
    pub b_range: [f64; 2],
    #[serde(default)]
    pub c_range: [f64; 2],
    /// Per-node costs for `mode = "explicit"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<ExplicitCost>,
}

impl CostConfig {
    fn default_mode() -> CostMode {
        CostMode::Random
    }
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            mode: CostMode::Random,
            a_range: d_a_range(),
            b_range: d_b_range(),
            c_range: [0.0, 0.0],
            nodes: Vec::new(),
        }
    }
}

/// A linear coefficient that may be scalar (with `a`) or a vector (with `q`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BCoeff {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Default for BCoeff {
    fn default() -> Self {
        BCoeff::Scalar(0.0)
    }
}

/// One explicitly-specified node cost: exactly one of `a` (scalar quadratic
/// `a x^2 + b x + c`) or `q` (row-major matrix of the form
/// `x^T Q x / 2 + b^T x + c`) must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitCost {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub b: BCoeff,
    #[serde(default)]
    pub c: f64,
}

impl ExplicitCost {
    fn build(&self) -> Result<QuadraticCost> {
        match (&self.a, &self.q) {
            (Some(a), None) => {
                let b = match &self.b {
                    BCoeff::Scalar(b) => *b,
                    BCoeff::Vector(_) => {
                        return Err(Error::config("costs.nodes", "scalar `a` requires scalar `b`"))
                    }
                };
                QuadraticCost::scalar(*a, b, self.c)
            }
            (None, Some(q)) => {
                let d = (q.len() as f64).sqrt().round() as usize;
                if d * d != q.len() || d == 0 {
                    return Err(Error::config(
                        "costs.nodes",
                        format!("`q` has {} entries, not a square matrix", q.len()),
                    ));
                }
                let b = match &self.b {
                    BCoeff::Scalar(s) if d == 1 => vec![*s],
                    BCoeff::Scalar(_) => {
                        return Err(Error::config("costs.nodes", "matrix `q` requires vector `b`"))
                    }
                    BCoeff::Vector(v) => {
                        if v.len() != d {
                            return Err(Error::config(
                                "costs.nodes",
                                format!("`b` has {} entries for a {d}x{d} `q`", v.len()),
                            ));
                        }
                        v.clone()
                    }
                };
                QuadraticCost::new(q.clone(), b, self.c)
            }
            _ => Err(Error::config(
                "costs.nodes",
                "each node needs exactly one of `a` (scalar) or `q` (row-major matrix)",
            )),
        }
    }
}

/// Grid for the stability sweep. Defaults cover the standard study:
/// alpha in 0.1..=2.0 (step 0.1), rho in {0.1, 0.2, 0.5, 1, 2, 5, 10},
/// p in {0, 0.2, 0.4, 0.6, 0.8}.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "SweepGrid::default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "SweepGrid::default_rhos")]
    pub rhos: Vec<f64>,
    #[serde(default = "SweepGrid::default_ps")]
    pub ps: Vec<f64>,
}

impl SweepGrid {
    fn default_alphas() -> Vec<f64> {
        (1..=20).map(|i| i as f64 / 10.0).collect()
    }
    fn default_rhos() -> Vec<f64> {
        vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]
    }
    fn default_ps() -> Vec<f64> {
        vec![0.0, 0.2, 0.4, 0.6, 0.8]
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            alphas: Self::default_alphas(),
            rhos: Self::default_rhos(),
            ps: Self::default_ps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeConfig {
    pub alphas: Vec<f64>,
}

/// Step sizes used by the step-size study when no `[stepsize]` section is
/// given.
pub const DEFAULT_STEPSIZE_ALPHAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

fn check_range(key: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::config(key, format!("invalid range [{}, {}]", r[0], r[1])));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Validate ranges and cross-field constraints; errors name the
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("this build reads schema version {CONFIG_VERSION}, file says {}", self.version),
            ));
        }
        let variant = Variant::from_number(self.variant)
            .map_err(|_| Error::config("variant", "must be 1, 2, or 3"))?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("alpha", format!("must be finite and > 0, got {}", self.alpha)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::config("rho", format!("must be finite and > 0, got {}", self.rho)));
        }
        if !self.p.is_finite() || !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config("p", format!("must lie in [0, 1], got {}", self.p)));
        }
        for e in &self.p_edges {
            if !e.p.is_finite() || !(0.0..=1.0).contains(&e.p) {
                return Err(Error::config(
                    "p_edges",
                    format!("probability for ({}, {}) must lie in [0, 1], got {}", e.from, e.to, e.p),
                ));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("tol", format!("must be finite and > 0, got {}", self.tol)));
        }
        if !(self.target_tol.is_finite() && self.target_tol > 0.0) {
            return Err(Error::config("target_tol", format!("must be finite and > 0, got {}", self.target_tol)));
        }
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "must be at least 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::config("init_scale", format!("must be finite and >= 0, got {}", self.init_scale)));
        }
        self.graph.validate()?;
        self.costs.validate(self.graph.n)?;
        if self.has_loss() {
            match variant {
                Variant::Alg1 if !self.allow_lossy_alg1 => {
                    return Err(Error::config(
                        "p",
                        "the explicit form (variant = 1) has no lossy variant; \
                         pass --unsafe-lossy-alg1 to explore it with no convergence claim",
                    ));
                }
                Variant::Alg2 => {
                    return Err(Error::config(
                        "p",
                        "variant = 2 is the lossless form; use variant = 3 to simulate packet loss",
                    ));
                }
                _ => {}
            }
        }
        if let Some(grid) = &self.sweep {
            grid.validate()?;
            if grid.ps.iter().any(|&p| p > 0.0) && variant != Variant::Alg3 && !(variant == Variant::Alg1 && self.allow_lossy_alg1)
            {
                return Err(Error::config(
                    "sweep.ps",
                    "nonzero loss probabilities in a sweep require variant = 3",
                ));
            }
            if !self.p_edges.is_empty() {
                return Err(Error::config("p_edges", "sweeps vary a uniform p; per-edge maps are not sweepable"));
            }
        }
        if let Some(s) = &self.stepsize {
            if s.alphas.is_empty() {
                return Err(Error::config("stepsize.alphas", "must list at least one step size"));
            }
            if let Some(bad) = s.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(Error::config("stepsize.alphas", format!("step sizes must be finite and > 0, got {bad}")));
            }
        }
        Ok(())
    }

    /// Whether any transmission can be lost under this config.
    pub fn has_loss(&self) -> bool {
        self.p > 0.0 || self.p_edges.iter().any(|e| e.p > 0.0)
    }

    /// Instantiate the loss model for a concrete graph.
    pub fn build_loss(&self, idx: &DirectedEdgeIndex, seed: u64) -> Result<LossModel> {
        if self.p_edges.is_empty() {
            LossModel::uniform(self.p, seed)
        } else {
            let entries: Vec<(usize, usize, f64)> =
                self.p_edges.iter().map(|e| (e.from, e.to, e.p)).collect();
            LossModel::per_edge(idx, self.p, &entries, seed)
        }
    }

    /// True when a diverged run cannot be blamed on the parameters: lossless,
    /// step size inside the guaranteed region, positive penalty.
    pub fn divergence_is_unexpected(&self) -> bool {
        !self.has_loss() && self.alpha > 0.0 && self.alpha < 1.0 && self.rho > 0.0
    }
}

impl GraphConfig {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("graph.n", format!("need at least 2 nodes, got {}", self.n)));
        }
        if self.family == GraphFamily::RandomGeometric {
            if !(self.radius.is_finite() && self.radius > 0.0) {
                return Err(Error::config("graph.radius", format!("must be finite and > 0, got {}", self.radius)));
            }
            if self.radius < 0.3 && !self.allow_sparse_radius {
                return Err(Error::config(
                    "graph.radius",
                    format!(
                        "radius {} rarely yields a connected draw; set graph.allow_sparse_radius = true to accept the retry cost",
                        self.radius
                    ),
                ));
            }
        }
        Ok(())
    }
}

impl CostConfig {
    fn validate(&self, n: usize) -> Result<()> {
        match self.mode {
            CostMode::Random => {
                if !self.nodes.is_empty() {
                    return Err(Error::config("costs.nodes", "per-node entries require mode = \"explicit\""));
                }
                check_range("costs.a_range", self.a_range)?;
                if self.a_range[0] <= 0.0 {
                    return Err(Error::config("costs.a_range", "curvatures must be strictly positive"));
                }
                check_range("costs.b_range", self.b_range)?;
                check_range("costs.c_range", self.c_range)?;
            }
            CostMode::Explicit => {
                if self.nodes.len() != n {
                    return Err(Error::config(
                        "costs.nodes",
                        format!("{} entries for {} nodes", self.nodes.len(), n),
                    ));
                }
                let dims: Vec<usize> = self
                    .nodes
                    .iter()
                    .map(|e| e.build().map(|c| c.dim()))
                    .collect::<Result<_>>()?;
                if dims.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::config("costs.nodes", "all nodes must share one dimension"));
                }
            }
        }
        Ok(())
    }
}

impl SweepGrid {
    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.rhos.is_empty() || self.ps.is_empty() {
            return Err(Error::config("sweep", "alphas, rhos, and ps must be non-empty"));
        }
        if let Some(bad) = self.alphas.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config("sweep.alphas", format!("must be finite and > 0, got {bad}")));
        }
        if let Some(bad) = self.rhos.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config("sweep.rhos", format!("must be finite and > 0, got {bad}")));
        }
        if let Some(bad) = self.ps.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
            return Err(Error::config("sweep.ps", format!("must lie in [0, 1], got {bad}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Seeds and problem construction
// ---------------------------------------------------------------------------

/// Sub-seed bundle of one Monte-Carlo run. Derivation depends only on the
/// master seed and the run index, never on the grid cell, so the same run
/// index is a paired sample across parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub run: u64,
    pub graph: u64,
    pub cost: u64,
    pub loss: u64,
    pub init: u64,
}

pub fn run_seeds(master: u64, run_index: u64, fixed_graph: bool, fixed_costs: bool) -> RunSeeds {
    let run = derive(master, &[TAG_RUN, run_index]);
    let graph_base = if fixed_graph { master } else { run };
    let cost_base = if fixed_costs { master } else { run };
    RunSeeds {
        run,
        graph: derive(graph_base, &[TAG_GRAPH]),
        cost: derive(cost_base, &[TAG_COST]),
        loss: derive(run, &[TAG_LOSS]),
        init: derive(run, &[TAG_INIT]),
    }
}

/// Draw the graph, edge index, and costs of one run.
pub fn build_problem(
    cfg: &ExperimentConfig,
    seeds: &RunSeeds,
) -> Result<(Graph, DirectedEdgeIndex, Vec<QuadraticCost>)> {
    let g = match cfg.graph.family {
        GraphFamily::Cycle => Graph::cycle(cfg.graph.n)?,
        GraphFamily::RandomGeometric => {
            Graph::random_geometric(cfg.graph.n, cfg.graph.radius, seeds.graph)?
        }
    };
    let idx = DirectedEdgeIndex::new(&g);
    let costs = match cfg.costs.mode {
        CostMode::Random => {
            let ranges = CostRanges {
                a: (cfg.costs.a_range[0], cfg.costs.a_range[1]),
                b: (cfg.costs.b_range[0], cfg.costs.b_range[1]),
                c: (cfg.costs.c_range[0], cfg.costs.c_range[1]),
            };
            make_random_quadratics(cfg.graph.n, seeds.cost, &ranges)?
        }
        CostMode::Explicit => cfg.costs.nodes.iter().map(|e| e.build()).collect::<Result<_>>()?,
    };
    Ok((g, idx, costs))
}

/// Initial z-field: zero by default, uniform in [-init_scale, init_scale]
/// otherwise.
pub fn initial_z(idx: &DirectedEdgeIndex, dim: usize, init_scale: f64, seed: u64) -> EdgeField {
    let mut z = EdgeField::zeros(idx, dim);
    if init_scale > 0.0 {
        let mut rng = SplitMix64::new(seed);
        for v in z.as_mut_slice() {
            *v = rng.uniform(-init_scale, init_scale);
        }
    }
    z
}

fn initial_alg1(
    g: &Graph,
    idx: &DirectedEdgeIndex,
    dim: usize,
    init_scale: f64,
    seed: u64,
) -> Alg1State {
    let mut st = Alg1State::zeros(g, idx, dim);
    if init_scale > 0.0 {
        let mut rng = SplitMix64::new(seed);
        for v in st.x.as_mut_slice() {
            *v = rng.uniform(-init_scale, init_scale);
        }
        for v in st.y.as_mut_slice() {
            *v = rng.uniform(-init_scale, init_scale);
        }
        for v in st.w.as_mut_slice() {
            *v = rng.uniform(-init_scale, init_scale);
        }
    }
    st
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Converged,
    Diverged,
    Inconclusive,
}

impl std::fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunOutcome::Converged => "converged",
            RunOutcome::Diverged => "diverged",
            RunOutcome::Inconclusive => "inconclusive",
        })
    }
}

/// Per-iteration error series of one run plus its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub run_id: u64,
    pub alpha: f64,
    pub rho: f64,
    /// Mean per-edge loss probability (equals the scalar `p` for the
    /// uniform model).
    pub p: f64,
    /// The derived per-run seed, recorded for post-mortem reproduction.
    pub seed: u64,
    /// `rel_errors[k]` is the error after `k` rounds; index 0 is the
    /// initial state. Recording stops at convergence, divergence, or the
    /// round budget. Non-finite errors are never recorded.
    pub rel_errors: Vec<f64>,
    pub outcome: RunOutcome,
    /// First `k` with error below `target_tol`.
    pub iters_to_target: Option<u64>,
    /// First `k` with error below the classification tolerance `tol`.
    pub iters_to_tol: Option<u64>,
    /// Iteration at which divergence was detected, if any.
    pub diverged_at: Option<u64>,
    /// Last finite error (retained even for diverged runs).
    pub final_error: f64,
}

/// Relative consensus error `||stack(x_i) - 1 (x) x*|| / ||1 (x) x*||`, in
/// absolute terms when the optimum is numerically zero.
pub fn relative_error(x: &NodeField, x_star: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.n_nodes() {
        let xi = x.node(i);
        for d in 0..x.dim() {
            let diff = xi[d] - x_star[d];
            num += diff * diff;
            den += x_star[d] * x_star[d];
        }
    }
    let (num, den) = (num.sqrt(), den.sqrt());
    if den < DENOMINATOR_FLOOR {
        num
    } else {
        num / den
    }
}

enum Machine {
    Explicit(Alg1State),
    ExplicitLossy(Alg1LossyState, LossModel),
    Compact(Alg2State),
    CompactLossy(Alg2State, LossModel),
}

impl Machine {
    fn x(&self) -> &NodeField {
        match self {
            Machine::Explicit(st) => &st.x,
            Machine::ExplicitLossy(ls, _) => &ls.state.x,
            Machine::Compact(st) | Machine::CompactLossy(st, _) => &st.x,
        }
    }

    fn step(
        &mut self,
        g: &Graph,
        idx: &DirectedEdgeIndex,
        costs: &[QuadraticCost],
        alpha: f64,
        rho: f64,
        k: u64,
    ) -> Result<()> {
        match self {
            Machine::Explicit(st) => *st = alg1_step(st, g, idx, costs, alpha, rho)?,
            Machine::ExplicitLossy(ls, loss) => {
                *ls = alg1_lossy_step(ls, g, idx, costs, alpha, rho, loss, k)?
            }
            Machine::Compact(st) => *st = alg2_step(st, g, idx, costs, alpha, rho)?.0,
            Machine::CompactLossy(st, loss) => {
                *st = alg3_step(st, g, idx, costs, alpha, rho, loss, k)?
            }
        }
        Ok(())
    }
}

/// Execute one run: the configured variant for up to `max_iters` rounds or
/// until the classification tolerance or the divergence rule fires, with the
/// error recorded against the centralized optimum at every round.
pub fn run_trace(cfg: &ExperimentConfig, run_index: u64) -> Result<TraceRecord> {
    cfg.validate()?;
    let seeds = run_seeds(cfg.seed, run_index, cfg.fixed_graph, cfg.fixed_costs);
    let (g, idx, costs) = build_problem(cfg, &seeds)?;
    let x_star = centralized_optimum(&costs)?;
    let dim = costs[0].dim();
    let variant = Variant::from_number(cfg.variant)?;
    let loss = match variant {
        Variant::Alg3 => Some(cfg.build_loss(&idx, seeds.loss)?),
        Variant::Alg1 if cfg.has_loss() => Some(cfg.build_loss(&idx, seeds.loss)?),
        _ => None,
    };
    let p_report = loss.as_ref().map(|l| l.mean_p(&idx)).unwrap_or(cfg.p);
    let mut machine = match (variant, loss) {
        (Variant::Alg1, None) => {
            Machine::Explicit(initial_alg1(&g, &idx, dim, cfg.init_scale, seeds.init))
        }
        (Variant::Alg1, Some(l)) => Machine::ExplicitLossy(
            Alg1LossyState::new(initial_alg1(&g, &idx, dim, cfg.init_scale, seeds.init), &idx),
            l,
        ),
        (Variant::Alg2, _) => Machine::Compact(Alg2State::from_z(
            initial_z(&idx, dim, cfg.init_scale, seeds.init),
            &g,
            &idx,
            &costs,
            cfg.rho,
        )?),
        (Variant::Alg3, l) => Machine::CompactLossy(
            Alg2State::from_z(initial_z(&idx, dim, cfg.init_scale, seeds.init), &g, &idx, &costs, cfg.rho)?,
            l.expect("variant 3 always carries a loss model"),
        ),
    };

    let mut rel_errors = Vec::with_capacity(cfg.max_iters as usize + 1);
    let mut outcome = RunOutcome::Inconclusive;
    let mut iters_to_target = None;
    let mut iters_to_tol = None;
    let mut diverged_at = None;
    let mut k: u64 = 0;
    loop {
        let err = relative_error(machine.x(), &x_star);
        if !err.is_finite() {
            outcome = RunOutcome::Diverged;
            diverged_at = Some(k);
            break;
        }
        rel_errors.push(err);
        if err > DIVERGENCE_THRESHOLD {
            outcome = RunOutcome::Diverged;
            diverged_at = Some(k);
            break;
        }
        if iters_to_target.is_none() && err < cfg.target_tol {
            iters_to_target = Some(k);
        }
        if err < cfg.tol {
            iters_to_tol = Some(k);
            outcome = RunOutcome::Converged;
            break;
        }
        if k == cfg.max_iters {
            break;
        }
        machine.step(&g, &idx, &costs, cfg.alpha, cfg.rho, k)?;
        k += 1;
    }
    let final_error = rel_errors.last().copied().unwrap_or(f64::INFINITY);
    Ok(TraceRecord {
        run_id: run_index,
        alpha: cfg.alpha,
        rho: cfg.rho,
        p: p_report,
        seed: seeds.run,
        rel_errors,
        outcome,
        iters_to_target,
        iters_to_tol,
        diverged_at,
        final_error,
    })
}

// ---------------------------------------------------------------------------
// Monte-Carlo aggregation
// ---------------------------------------------------------------------------

/// Per-iteration aggregate over a batch of runs that share (alpha, rho, p).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub alpha: f64,
    pub rho: f64,
    pub p: f64,
    /// Per-k mean relative error; runs that stopped early contribute their
    /// last recorded value (carry-forward).
    pub mean_rel_error: Vec<f64>,
    /// Per-k mean of log10 of the error (floored at 1e-300).
    pub mean_log10_rel_error: Vec<f64>,
    /// Per-k count of runs that had diverged by iteration k (cumulative).
    pub n_diverged: Vec<u64>,
}

/// Merge per-run traces into per-k means. All runs must share the same
/// (alpha, rho, p); aggregation over mismatched batches is refused.
pub fn aggregate(runs: &[TraceRecord]) -> Result<Aggregate> {
    let first = runs.first().ok_or_else(|| Error::param("runs", "cannot aggregate zero runs"))?;
    if runs
        .iter()
        .any(|r| r.alpha != first.alpha || r.rho != first.rho || r.p != first.p)
    {
        return Err(Error::dim("aggregate over runs with mismatched (alpha, rho, p)"));
    }
    let k_max = runs.iter().map(|r| r.rel_errors.len()).max().unwrap_or(0);
    let n = runs.len() as f64;
    let mut mean_rel_error = Vec::with_capacity(k_max);
    let mut mean_log10_rel_error = Vec::with_capacity(k_max);
    let mut n_diverged = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mut sum = 0.0;
        let mut sum_log = 0.0;
        let mut nd = 0u64;
        for r in runs {
            let v = if r.rel_errors.is_empty() {
                f64::INFINITY
            } else {
                r.rel_errors[k.min(r.rel_errors.len() - 1)]
            };
            sum += v;
            sum_log += v.max(DENOMINATOR_FLOOR).log10();
            if r.diverged_at.is_some_and(|d| d <= k as u64) {
                nd += 1;
            }
        }
        mean_rel_error.push(sum / n);
        mean_log10_rel_error.push(sum_log / n);
        n_diverged.push(nd);
    }
    Ok(Aggregate {
        alpha: first.alpha,
        rho: first.rho,
        p: first.p,
        mean_rel_error,
        mean_log10_rel_error,
        n_diverged,
    })
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    /// Per-run traces in run-index order.
    pub runs: Vec<TraceRecord>,
    pub aggregate: Aggregate,
}

impl MonteCarloResult {
    pub fn n_diverged_total(&self) -> u64 {
        self.runs.iter().filter(|r| r.outcome == RunOutcome::Diverged).count() as u64
    }
}

/// Run `cfg.n_runs` independent traces (concurrently) and aggregate them in
/// run-index order.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let runs: Vec<TraceRecord> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| run_trace(cfg, r))
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&runs)?;
    Ok(MonteCarloResult { runs, aggregate })
}

// ---------------------------------------------------------------------------
// Stability sweep
// ---------------------------------------------------------------------------

/// Outcome and iteration statistics of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    pub rho: f64,
    pub p: f64,
    /// Converged iff every run converged; diverged iff any run diverged;
    /// inconclusive otherwise.
    pub outcome: RunOutcome,
    /// Mean of iterations-to-`target_tol` over the runs that reached it
    /// (NaN when none did).
    pub mean_iters_to_tol: f64,
    pub n_diverged: u64,
}

/// Boundary point: the largest grid alpha classified convergent at (rho, p).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMaxPoint {
    pub rho: f64,
    pub p: f64,
    pub alpha_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Cells in deterministic order: alphas outermost, then rhos, then ps.
    pub cells: Vec<SweepCell>,
    /// One boundary point per (rho, p) pair.
    pub alpha_max: Vec<AlphaMaxPoint>,
}

/// Classify every (alpha, rho, p) cell of the grid over `cfg.n_runs` runs.
/// Run seeds depend only on the run index, so cells share problem draws and
/// coupled loss streams.
pub fn stability_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.sweep.clone().unwrap_or_default();
    let mut params: Vec<(f64, f64, f64)> =
        Vec::with_capacity(grid.alphas.len() * grid.rhos.len() * grid.ps.len());
    for &a in &grid.alphas {
        for &r in &grid.rhos {
            for &p in &grid.ps {
                params.push((a, r, p));
            }
        }
    }
    let n_runs = cfg.n_runs;
    let jobs: Vec<(usize, u64)> = (0..params.len())
        .flat_map(|c| (0..n_runs).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(RunOutcome, Option<u64>)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (alpha, rho, p) = params[c];
            let mut cell_cfg = cfg.clone();
            cell_cfg.alpha = alpha;
            cell_cfg.rho = rho;
            cell_cfg.p = p;
            cell_cfg.sweep = None;
            cell_cfg.stepsize = None;
            let t = run_trace(&cell_cfg, r)?;
            Ok((t.outcome, t.iters_to_target))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(params.len());
    for (c, &(alpha, rho, p)) in params.iter().enumerate() {
        let slice = &outcomes[c * n_runs as usize..(c + 1) * n_runs as usize];
        let any_diverged = slice.iter().any(|(o, _)| *o == RunOutcome::Diverged);
        let all_converged = slice.iter().all(|(o, _)| *o == RunOutcome::Converged);
        let outcome = if any_diverged {
            RunOutcome::Diverged
        } else if all_converged {
            RunOutcome::Converged
        } else {
            RunOutcome::Inconclusive
        };
        let reached: Vec<u64> = slice.iter().filter_map(|(_, it)| *it).collect();
        let mean_iters_to_tol = if reached.is_empty() {
            f64::NAN
        } else {
            reached.iter().sum::<u64>() as f64 / reached.len() as f64
        };
        let n_diverged = slice.iter().filter(|(o, _)| *o == RunOutcome::Diverged).count() as u64;
        cells.push(SweepCell { alpha, rho, p, outcome, mean_iters_to_tol, n_diverged });
    }
    let mut alpha_max = Vec::with_capacity(grid.rhos.len() * grid.ps.len());
    for &rho in &grid.rhos {
        for &p in &grid.ps {
            let best = cells
                .iter()
                .filter(|c| c.rho == rho && c.p == p && c.outcome == RunOutcome::Converged)
                .map(|c| c.alpha)
                .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |m| m.max(a))));
            alpha_max.push(AlphaMaxPoint { rho, p, alpha_max: best });
        }
    }
    Ok(SweepResult { cells, alpha_max })
}

// ---------------------------------------------------------------------------
// Step-size study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StepsizeResult {
    pub alphas: Vec<f64>,
    /// One Monte-Carlo batch per step size, in `alphas` order.
    pub batches: Vec<MonteCarloResult>,
    /// Mean iterations-to-`target_tol` per step size (NaN when no run
    /// reached it).
    pub mean_iters_to_target: Vec<f64>,
}

/// One Monte-Carlo batch per step size at fixed (rho, p); the shared run
/// seeds make the columns paired samples.
pub fn stepsize_study(cfg: &ExperimentConfig) -> Result<StepsizeResult> {
    cfg.validate()?;
    let alphas = cfg
        .stepsize
        .as_ref()
        .map(|s| s.alphas.clone())
        .unwrap_or_else(|| DEFAULT_STEPSIZE_ALPHAS.to_vec());
    let mut batches = Vec::with_capacity(alphas.len());
    let mut mean_iters_to_target = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let mut c = cfg.clone();
        c.alpha = alpha;
        c.sweep = None;
        c.stepsize = None;
        let batch = monte_carlo(&c)?;
        mean_iters_to_target.push(mean_iters(&batch.runs));
        batches.push(batch);
    }
    Ok(StepsizeResult { alphas, batches, mean_iters_to_target })
}

/// Mean of iterations-to-target over the runs that reached it (NaN if none).
pub fn mean_iters(runs: &[TraceRecord]) -> f64 {
    let reached: Vec<u64> = runs.iter().filter_map(|r| r.iters_to_target).collect();
    if reached.is_empty() {
        f64::NAN
    } else {
        reached.iter().sum::<u64>() as f64 / reached.len() as f64
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Fixed float format for CSV fields: 17 significant digits, enough for
/// exact f64 round-trips.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `k,run_id,alpha,rho,p,rel_error` — one row per recorded iteration per run.
pub fn write_trace_csv<W: Write>(mut w: W, runs: &[TraceRecord]) -> io::Result<()> {
    writeln!(w, "k,run_id,alpha,rho,p,rel_error")?;
    for r in runs {
        for (k, e) in r.rel_errors.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k,
                r.run_id,
                fmt_float(r.alpha),
                fmt_float(r.rho),
                fmt_float(r.p),
                fmt_float(*e)
            )?;
        }
    }
    Ok(())
}

/// `k,alpha,rho,p,mean_rel_error,mean_log10_rel_error,n_diverged`.
pub fn write_aggregate_csv<W: Write>(mut w: W, a: &Aggregate) -> io::Result<()> {
    writeln!(w, "k,alpha,rho,p,mean_rel_error,mean_log10_rel_error,n_diverged")?;
    for k in 0..a.mean_rel_error.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            k,
            fmt_float(a.alpha),
            fmt_float(a.rho),
            fmt_float(a.p),
            fmt_float(a.mean_rel_error[k]),
            fmt_float(a.mean_log10_rel_error[k]),
            a.n_diverged[k]
        )?;
    }
    Ok(())
}

/// `alpha,rho,p,outcome,mean_iters_to_tol`.
pub fn write_sweep_csv<W: Write>(mut w: W, cells: &[SweepCell]) -> io::Result<()> {
    writeln!(w, "alpha,rho,p,outcome,mean_iters_to_tol")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_float(c.alpha),
            fmt_float(c.rho),
            fmt_float(c.p),
            c.outcome,
            fmt_float(c.mean_iters_to_tol)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            variant: 3,
            seed: 99,
            n_runs: 4,
            max_iters: 800,
            graph: GraphConfig { family: GraphFamily::Cycle, n: 8, ..Default::default() },
            costs: CostConfig { b_range: [1.0, 5.0], ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn minimal_toml_fills_documented_defaults() {
        let cfg: ExperimentConfig =
            toml::from_str("version = 1\nvariant = 3\n\n[graph]\nn = 10\n").unwrap();
        assert_eq!(cfg.variant, 3);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.rho, 1.0);
        assert_eq!(cfg.p, 0.0);
        assert_eq!(cfg.max_iters, 5000);
        assert_eq!(cfg.tol, 1e-8);
        assert_eq!(cfg.target_tol, 1e-4);
        assert_eq!(cfg.n_runs, 100);
        assert_eq!(cfg.graph.n, 10);
        assert_eq!(cfg.graph.radius, 0.5);
        assert_eq!(cfg.graph.family, GraphFamily::RandomGeometric);
        assert_eq!(cfg.costs.a_range, [0.5, 2.0]);
        assert_eq!(cfg.costs.b_range, [-5.0, 5.0]);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("version = 1\nrho_typo = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("rho_typo"));
        // Nested sections fail closed too.
        assert!(toml::from_str::<ExperimentConfig>("version = 1\n[graph]\nm = 10\n").is_err());
    }

    #[test]
    fn version_field_is_mandatory_and_checked() {
        assert!(toml::from_str::<ExperimentConfig>("variant = 3\n").is_err());
        let cfg = ExperimentConfig { version: 2, ..Default::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("version"), "{msg}");
    }

    #[test]
    fn validation_names_the_offending_key() {
        let cases: Vec<(ExperimentConfig, &str)> = vec![
            (ExperimentConfig { rho: -1.0, ..Default::default() }, "rho"),
            (ExperimentConfig { alpha: 0.0, ..Default::default() }, "alpha"),
            (ExperimentConfig { p: 1.5, variant: 3, ..Default::default() }, "p"),
            (ExperimentConfig { max_iters: 0, ..Default::default() }, "max_iters"),
            (ExperimentConfig { n_runs: 0, ..Default::default() }, "n_runs"),
            (
                ExperimentConfig {
                    graph: GraphConfig { n: 1, ..Default::default() },
                    ..Default::default()
                },
                "graph.n",
            ),
            (
                ExperimentConfig {
                    graph: GraphConfig { radius: 0.2, ..Default::default() },
                    ..Default::default()
                },
                "graph.radius",
            ),
            (
                ExperimentConfig {
                    costs: CostConfig { a_range: [0.0, 1.0], ..Default::default() },
                    ..Default::default()
                },
                "costs.a_range",
            ),
        ];
        for (cfg, key) in cases {
            let msg = cfg.validate().unwrap_err().to_string();
            assert!(msg.contains(key), "expected `{key}` in: {msg}");
        }
    }

    #[test]
    fn sparse_radius_is_allowed_when_acknowledged() {
        let cfg = ExperimentConfig {
            graph: GraphConfig {
                n: 6,
                radius: 0.25,
                allow_sparse_radius: true,
                ..Default::default()
            },
            ..Default::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn loss_requires_the_lossy_variant() {
        let v2 = ExperimentConfig { variant: 2, p: 0.3, ..Default::default() };
        assert!(v2.validate().is_err());
        let v1 = ExperimentConfig { variant: 1, p: 0.3, ..Default::default() };
        assert!(v1.validate().is_err());
        let v1_opted_in =
            ExperimentConfig { variant: 1, p: 0.3, allow_lossy_alg1: true, ..Default::default() };
        v1_opted_in.validate().unwrap();
        let v3 = ExperimentConfig { variant: 3, p: 0.3, ..Default::default() };
        v3.validate().unwrap();
    }

    #[test]
    fn explicit_costs_build_and_validate() {
        let toml_text = r#"
            version = 1
            variant = 2

            [graph]
            family = "cycle"
            n = 2

            [costs]
            mode = "explicit"

            [[costs.nodes]]
            a = 1.0
            b = 2.0

            [[costs.nodes]]
            a = 2.0
            b = -1.0
            c = 0.5
        "#;
        let cfg: ExperimentConfig = toml::from_str(toml_text).unwrap();
        cfg.validate().unwrap();
        let seeds = run_seeds(cfg.seed, 0, false, false);
        let (_, _, costs) = build_problem(&cfg, &seeds).unwrap();
        assert_eq!(costs[0].q(), &[2.0]);
        assert_eq!(costs[0].b(), &[2.0]);
        assert_eq!(costs[1].c(), 0.5);

        // Matrix form.
        let vec_cost = ExplicitCost {
            a: None,
            q: Some(vec![2.0, 0.0, 0.0, 2.0]),
            b: BCoeff::Vector(vec![1.0, -1.0]),
            c: 0.0,
        };
        assert_eq!(vec_cost.build().unwrap().dim(), 2);

        // Invalid shapes.
        let both = ExplicitCost { a: Some(1.0), q: Some(vec![1.0]), b: BCoeff::Scalar(0.0), c: 0.0 };
        assert!(both.build().is_err());
        let neither = ExplicitCost { a: None, q: None, b: BCoeff::Scalar(0.0), c: 0.0 };
        assert!(neither.build().is_err());
        let ragged = ExplicitCost {
            a: None,
            q: Some(vec![1.0, 0.0, 0.0]),
            b: BCoeff::Scalar(0.0),
            c: 0.0,
        };
        assert!(ragged.build().is_err());
    }

    #[test]
    fn run_seed_derivation_honors_the_fixed_flags() {
        let a = run_seeds(7, 0, false, false);
        let b = run_seeds(7, 1, false, false);
        assert_ne!(a.run, b.run);
        assert_ne!(a.graph, b.graph);
        assert_ne!(a.cost, b.cost);
        assert_ne!(a.loss, b.loss);

        let fg0 = run_seeds(7, 0, true, false);
        let fg1 = run_seeds(7, 1, true, false);
        assert_eq!(fg0.graph, fg1.graph, "fixed graph seed must not vary per run");
        assert_ne!(fg0.cost, fg1.cost);

        let fc0 = run_seeds(7, 0, false, true);
        let fc1 = run_seeds(7, 1, false, true);
        assert_eq!(fc0.cost, fc1.cost, "fixed cost seed must not vary per run");
        assert_ne!(fc0.graph, fc1.graph);
    }

    #[test]
    fn lossless_cycle_run_converges_well_before_the_budget() {
        // Default-parameter baseline: p = 0, alpha = 0.5, rho = 1, N = 10
        // cycle, random quadratics.
        let cfg = ExperimentConfig {
            variant: 3,
            seed: 1,
            graph: GraphConfig { family: GraphFamily::Cycle, n: 10, ..Default::default() },
            ..Default::default()
        };
        let t = run_trace(&cfg, 0).unwrap();
        assert_eq!(t.outcome, RunOutcome::Converged);
        let k = t.iters_to_tol.unwrap();
        assert!(k < 5000);
        assert!(t.final_error < 1e-6);
        assert_eq!(t.rel_errors.len() as u64, k + 1);
    }

    #[test]
    fn total_loss_freezes_the_error_at_its_initial_value() {
        let cfg = ExperimentConfig { p: 1.0, max_iters: 200, ..small_cfg() };
        let t = run_trace(&cfg, 0).unwrap();
        assert_eq!(t.outcome, RunOutcome::Inconclusive);
        assert_eq!(t.rel_errors.len(), 201);
        for e in &t.rel_errors {
            assert_eq!(e.to_bits(), t.rel_errors[0].to_bits());
        }
    }

    #[test]
    fn huge_initialization_trips_the_divergence_rule() {
        let cfg = ExperimentConfig { init_scale: 1e120, ..small_cfg() };
        let t = run_trace(&cfg, 0).unwrap();
        assert_eq!(t.outcome, RunOutcome::Diverged);
        assert_eq!(t.diverged_at, Some(0));
        assert!(t.final_error.is_finite(), "last finite error is retained");
        assert!(t.final_error > DIVERGENCE_THRESHOLD);
        assert!(cfg.divergence_is_unexpected());

        // Past ~1e154 the squared norm overflows: the non-finite rule fires
        // instead and no finite error was ever observed.
        let cfg = ExperimentConfig { init_scale: 1e200, ..small_cfg() };
        let t = run_trace(&cfg, 0).unwrap();
        assert_eq!(t.outcome, RunOutcome::Diverged);
        assert!(t.rel_errors.is_empty());
        assert!(t.final_error.is_infinite());
    }

    #[test]
    fn monte_carlo_with_one_run_equals_run_trace() {
        let cfg = ExperimentConfig { n_runs: 1, ..small_cfg() };
        let mc = monte_carlo(&cfg).unwrap();
        let single = run_trace(&cfg, 0).unwrap();
        assert_eq!(mc.runs[0], single);
        assert_eq!(mc.aggregate.mean_rel_error, single.rel_errors);
        assert!(mc.aggregate.n_diverged.iter().all(|&n| n == 0));
    }

    #[test]
    fn monte_carlo_output_is_schedule_independent() {
        let cfg = ExperimentConfig { p: 0.4, ..small_cfg() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = one.install(|| monte_carlo(&cfg)).unwrap();
        let r4 = many.install(|| monte_carlo(&cfg)).unwrap();
        let mut csv1 = Vec::new();
        let mut csv4 = Vec::new();
        write_trace_csv(&mut csv1, &r1.runs).unwrap();
        write_trace_csv(&mut csv4, &r4.runs).unwrap();
        assert_eq!(csv1, csv4, "trace CSV must not depend on thread count");
        let mut agg1 = Vec::new();
        let mut agg4 = Vec::new();
        write_aggregate_csv(&mut agg1, &r1.aggregate).unwrap();
        write_aggregate_csv(&mut agg4, &r4.aggregate).unwrap();
        assert_eq!(agg1, agg4);
    }

    #[test]
    fn moderate_loss_batch_has_no_divergences() {
        let cfg = ExperimentConfig {
            p: 0.6,
            alpha: 1.0,
            n_runs: 20,
            max_iters: 3000,
            graph: GraphConfig::default(),
            ..small_cfg()
        };
        let mc = monte_carlo(&cfg).unwrap();
        assert_eq!(mc.n_diverged_total(), 0);
    }

    #[test]
    fn iterations_to_target_increase_with_loss() {
        // Trend check at alpha = 1, rho = 1 over a small batch; the
        // acceptance suite runs the full 100-run version.
        let base = ExperimentConfig {
            alpha: 1.0,
            n_runs: 25,
            max_iters: 3000,
            seed: 2024,
            graph: GraphConfig::default(),
            ..small_cfg()
        };
        let mut means = Vec::new();
        for p in [0.0, 0.2, 0.4, 0.6] {
            let mc = monte_carlo(&ExperimentConfig { p, ..base.clone() }).unwrap();
            means.push(mean_iters(&mc.runs));
        }
        for w in means.windows(2) {
            assert!(w[0] < w[1], "iterations must increase with p: {means:?}");
        }
    }

    #[test]
    fn aggregate_carries_forward_and_counts_divergences() {
        let mk = |errors: Vec<f64>, diverged_at: Option<u64>| TraceRecord {
            run_id: 0,
            alpha: 0.5,
            rho: 1.0,
            p: 0.0,
            seed: 0,
            rel_errors: errors,
            outcome: if diverged_at.is_some() {
                RunOutcome::Diverged
            } else {
                RunOutcome::Converged
            },
            iters_to_target: None,
            iters_to_tol: None,
            diverged_at,
            final_error: 0.0,
        };
        let runs = vec![
            mk(vec![4.0, 2.0, 1.0, 0.5], None),
            mk(vec![4.0, 2e9], Some(1)),
        ];
        let a = aggregate(&runs).unwrap();
        assert_eq!(a.mean_rel_error.len(), 4);
        assert_eq!(a.mean_rel_error[0], 4.0);
        // The diverged run carries its last value (2e9) forward.
        assert_eq!(a.mean_rel_error[2], (1.0 + 2e9) / 2.0);
        assert_eq!(a.n_diverged, vec![0, 1, 1, 1]);
        // Mismatched batches are refused.
        let other = mk(vec![1.0], None);
        let mut bad = runs.clone();
        bad.push(TraceRecord { alpha: 0.9, ..other });
        assert!(aggregate(&bad).is_err());
    }

    #[test]
    fn sweep_single_cell_agrees_with_direct_runs() {
        let cfg = ExperimentConfig {
            sweep: Some(SweepGrid { alphas: vec![0.5], rhos: vec![1.0], ps: vec![0.0] }),
            ..small_cfg()
        };
        let sweep = stability_sweep(&cfg).unwrap();
        assert_eq!(sweep.cells.len(), 1);
        let cell = &sweep.cells[0];
        assert_eq!(cell.outcome, RunOutcome::Converged);
        // Direct runs of the same cell must agree on every outcome.
        let mut direct = cfg.clone();
        direct.sweep = None;
        direct.alpha = 0.5;
        direct.rho = 1.0;
        direct.p = 0.0;
        for r in 0..cfg.n_runs {
            assert_eq!(run_trace(&direct, r).unwrap().outcome, RunOutcome::Converged);
        }
        assert_eq!(sweep.alpha_max.len(), 1);
        assert_eq!(sweep.alpha_max[0].alpha_max, Some(0.5));
    }

    #[test]
    fn sweep_guaranteed_region_is_all_converged() {
        let cfg = ExperimentConfig {
            n_runs: 3,
            max_iters: 2000,
            sweep: Some(SweepGrid {
                alphas: vec![0.3, 0.6, 0.9],
                rhos: vec![0.5, 1.0],
                ps: vec![0.0, 0.4],
            }),
            ..small_cfg()
        };
        let sweep = stability_sweep(&cfg).unwrap();
        assert_eq!(sweep.cells.len(), 12);
        for cell in &sweep.cells {
            assert_eq!(
                cell.outcome,
                RunOutcome::Converged,
                "cell (alpha {}, rho {}, p {})",
                cell.alpha,
                cell.rho,
                cell.p
            );
            assert!(cell.mean_iters_to_tol.is_finite());
        }
        for pt in &sweep.alpha_max {
            assert_eq!(pt.alpha_max, Some(0.9));
        }
    }

    #[test]
    fn stepsize_single_alpha_equals_monte_carlo() {
        let cfg = ExperimentConfig {
            p: 0.4,
            stepsize: Some(StepsizeConfig { alphas: vec![0.7] }),
            ..small_cfg()
        };
        let study = stepsize_study(&cfg).unwrap();
        let mut plain = cfg.clone();
        plain.stepsize = None;
        plain.alpha = 0.7;
        let mc = monte_carlo(&plain).unwrap();
        assert_eq!(study.batches[0].runs, mc.runs);
        assert_eq!(study.mean_iters_to_target[0], mean_iters(&mc.runs));
    }

    #[test]
    fn float_format_round_trips() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(-0.25), "-2.5000000000000000e-1");
        let mut rng = SplitMix64::new(404);
        for _ in 0..200 {
            let v = rng.uniform(-1e12, 1e12) * 10f64.powi((rng.next_u64() % 40) as i32 - 20);
            let back: f64 = fmt_float(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} vs {back}");
        }
        assert_eq!(fmt_float(f64::NAN), "NaN");
    }

    #[test]
    fn csv_headers_match_the_documented_schemas() {
        let cfg = ExperimentConfig { n_runs: 1, max_iters: 5, tol: 1e-300, ..small_cfg() };
        let mc = monte_carlo(&cfg).unwrap();
        let mut trace = Vec::new();
        write_trace_csv(&mut trace, &mc.runs).unwrap();
        let trace = String::from_utf8(trace).unwrap();
        assert!(trace.starts_with("k,run_id,alpha,rho,p,rel_error\n"));
        assert_eq!(trace.lines().count(), 1 + mc.runs[0].rel_errors.len());

        let mut agg = Vec::new();
        write_aggregate_csv(&mut agg, &mc.aggregate).unwrap();
        let agg = String::from_utf8(agg).unwrap();
        assert!(agg.starts_with("k,alpha,rho,p,mean_rel_error,mean_log10_rel_error,n_diverged\n"));

        let cells = vec![SweepCell {
            alpha: 0.5,
            rho: 1.0,
            p: 0.0,
            outcome: RunOutcome::Converged,
            mean_iters_to_tol: 12.0,
            n_diverged: 0,
        }];
        let mut sw = Vec::new();
        write_sweep_csv(&mut sw, &cells).unwrap();
        let sw = String::from_utf8(sw).unwrap();
        assert!(sw.starts_with("alpha,rho,p,outcome,mean_iters_to_tol\n"));
        assert!(sw.contains(",converged,"));
    }
}
