//! The three distributed R-ADMM state machines, executed in synchronous
//! rounds over a connected [`Graph`].
//!
//! * [`alg1_step`] — explicit form: per-directed-edge bridge variables `y_ij`
//!   and multipliers `w_ij` plus the per-node primal `x_i`.
//! * [`alg2_step`] — compact form: one per-directed-edge variable and one
//!   `q` message per directed edge per round.
//! * [`alg3_step`] — the compact form under i.i.d. Bernoulli packet loss;
//!   a lost message leaves the receiver's variable unchanged.
//!
//! Storage convention for the compact form: slot `(i, j)` of the z-field
//! holds the variable `z_ji`, the one *owned by node i* (node `i` stores
//! `z_ji` for each neighbor `j`). Grouping by owner keeps each node's state
//! in one contiguous block and makes the locality contract structural: node
//! `i` writes only slots `(i, *)`, and the only foreign data it consumes is
//! the message payload `q_{j->i}`.
//!
//! Round semantics: all x-updates are computed from round-`k` state before
//! any delivery, then all deliveries and z-updates apply simultaneously —
//! one round of transmissions per iteration.
//!
//! Floating point: every averaged update uses the increment form
//! `base + alpha * (target - base)` (see [`crate::splitting`]), which is what
//! makes "a lost message changes nothing" and "loss-gating commutes with
//! averaging" exact statements rather than approximate ones.

use crate::costs::LocalCost;
use crate::error::{Error, Result};
use crate::graph::{DirectedEdgeIndex, EdgeField, Graph, NodeField};
use crate::rng::{derive, u01};

/// Which of the three algorithm variants a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Explicit x/y/w form (lossless).
    Alg1,
    /// Compact x/z form with q-messages (lossless).
    Alg2,
    /// Compact form under Bernoulli packet loss.
    Alg3,
}

impl Variant {
    pub fn from_number(v: u64) -> Result<Self> {
        match v {
            1 => Ok(Variant::Alg1),
            2 => Ok(Variant::Alg2),
            3 => Ok(Variant::Alg3),
            other => Err(Error::param("variant", format!("must be 1, 2, or 3, got {other}"))),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            Variant::Alg1 => 1,
            Variant::Alg2 => 2,
            Variant::Alg3 => 3,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "algorithm {}", self.number())
    }
}

fn validate_step_params(alpha: f64, rho: f64) -> Result<()> {
    // Step size above 1 is deliberately allowed: the stability sweeps explore
    // it. Config-level validation decides what a given experiment permits.
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::param("alpha", format!("must be finite and > 0, got {alpha}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param("rho", format!("must be finite and > 0, got {rho}")));
    }
    Ok(())
}

fn check_costs<C: LocalCost>(g: &Graph, costs: &[C], dim: usize) -> Result<()> {
    if costs.len() != g.n_nodes() {
        return Err(Error::dim(format!("{} costs for {} nodes", costs.len(), g.n_nodes())));
    }
    if let Some(bad) = costs.iter().position(|c| c.dim() != dim) {
        return Err(Error::dim(format!("cost {bad} has dimension {}, state has {dim}", costs[bad].dim())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Algorithm 1: explicit x/y/w form
// ---------------------------------------------------------------------------

/// State of the explicit form: node primal `x`, per-directed-edge bridge
/// variables `y` and multipliers `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alg1State {
    pub x: NodeField,
    pub y: EdgeField,
    pub w: EdgeField,
}

impl Alg1State {
    pub fn zeros(g: &Graph, idx: &DirectedEdgeIndex, dim: usize) -> Self {
        Alg1State {
            x: NodeField::zeros(g.n_nodes(), dim),
            y: EdgeField::zeros(idx, dim),
            w: EdgeField::zeros(idx, dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite()
    }
}

/// One synchronous round of the explicit form. For every directed edge,
/// reading only round-`k` values on the right-hand sides:
///
/// ```text
///   y_ij(k+1) = [ (w_ij + w_ji) + 2 a r (x_i + x_j) - r (2a - 1)(y_ij + y_ji) ] / (2 r)
///   w_ij(k+1) = [ (w_ij - w_ji) + 2 a r (x_i - x_j) - r (2a - 1)(y_ij - y_ji) ] / 2
/// ```
///
/// (`a` = alpha, `r` = rho), then per node
/// `x_i(k+1) = argmin { f_i(x) + (r d_i / 2)||x||^2 + (sum_j w_ij(k+1) - r y_ij(k+1))^T x }`,
/// i.e. [`LocalCost::x_update`] with `s_i = sum_j (r y_ij(k+1) - w_ij(k+1))`.
pub fn alg1_step<C: LocalCost>(
    state: &Alg1State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
) -> Result<Alg1State> {
    validate_step_params(alpha, rho)?;
    let dim = state.x.dim();
    check_costs(g, costs, dim)?;
    let two_alpha_rho = 2.0 * alpha * rho;
    let shrink = rho * (2.0 * alpha - 1.0);
    alg1_round(state, g, idx, costs, rho, dim, |yij, yji, wij, wji, xi, xj| {
        (
            ((wij + wji) + two_alpha_rho * (xi + xj) - shrink * (yij + yji)) / (2.0 * rho),
            ((wij - wji) + two_alpha_rho * (xi - xj) - shrink * (yij - yji)) / 2.0,
        )
    })
}

/// One round of the classical-ADMM specialization: exactly the alpha = 1/2
/// case, with the `(2 alpha - 1)`-weighted terms cancelled rather than
/// multiplied by zero. Kept as an independent code path so the reduction can
/// be verified against [`alg1_step`].
pub fn classical_admm_step<C: LocalCost>(
    state: &Alg1State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    rho: f64,
) -> Result<Alg1State> {
    validate_step_params(0.5, rho)?;
    let dim = state.x.dim();
    check_costs(g, costs, dim)?;
    alg1_round(state, g, idx, costs, rho, dim, |_yij, _yji, wij, wji, xi, xj| {
        (
            ((wij + wji) + rho * (xi + xj)) / (2.0 * rho),
            ((wij - wji) + rho * (xi - xj)) / 2.0,
        )
    })
}

/// Shared y/w/x round skeleton: `edge_update` maps
/// `(y_ij, y_ji, w_ij, w_ji, x_i, x_j)` to `(y_ij(k+1), w_ij(k+1))`.
fn alg1_round<C: LocalCost>(
    state: &Alg1State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    rho: f64,
    dim: usize,
    edge_update: impl Fn(f64, f64, f64, f64, f64, f64) -> (f64, f64),
) -> Result<Alg1State> {
    let mut y_new = EdgeField::zeros(idx, dim);
    let mut w_new = EdgeField::zeros(idx, dim);
    for s in 0..idx.n_slots() {
        let (i, j) = idx.pair(s);
        let m = idx.mate(s);
        for d in 0..dim {
            let (ny, nw) = edge_update(
                state.y.slot(s)[d],
                state.y.slot(m)[d],
                state.w.slot(s)[d],
                state.w.slot(m)[d],
                state.x.node(i)[d],
                state.x.node(j)[d],
            );
            y_new.slot_mut(s)[d] = ny;
            w_new.slot_mut(s)[d] = nw;
        }
    }
    let mut x_new = NodeField::zeros(g.n_nodes(), dim);
    let mut s_i = vec![0.0; dim];
    for i in 0..g.n_nodes() {
        s_i.iter_mut().for_each(|v| *v = 0.0);
        for s in idx.node_slots(i) {
            for d in 0..dim {
                s_i[d] += rho * y_new.slot(s)[d] - w_new.slot(s)[d];
            }
        }
        let xi = costs[i].x_update(&s_i, rho, g.degree(i))?;
        x_new.node_mut(i).copy_from_slice(&xi);
    }
    Ok(Alg1State { x: x_new, y: y_new, w: w_new })
}

// ---------------------------------------------------------------------------
// Algorithms 2 and 3: compact x/z form
// ---------------------------------------------------------------------------

/// State of the compact form. Slot `(i, j)` of `z` holds `z_ji`, the variable
/// owned by node `i`. The `x` field is always the readout of the current `z`:
/// `x_i = x_update(sum_{j in N_i} z_ji, rho, |N_i|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alg2State {
    pub x: NodeField,
    pub z: EdgeField,
}

impl Alg2State {
    /// Build a state from a z-field, computing the x-readout.
    pub fn from_z<C: LocalCost>(
        z: EdgeField,
        g: &Graph,
        idx: &DirectedEdgeIndex,
        costs: &[C],
        rho: f64,
    ) -> Result<Self> {
        let x = readout_x(&z, g, idx, costs, rho)?;
        Ok(Alg2State { x, z })
    }

    /// The all-zero initialization (`z(0) = 0`; the x-readout of zero is
    /// generally nonzero).
    pub fn zeros<C: LocalCost>(
        g: &Graph,
        idx: &DirectedEdgeIndex,
        costs: &[C],
        rho: f64,
        dim: usize,
    ) -> Result<Self> {
        Alg2State::from_z(EdgeField::zeros(idx, dim), g, idx, costs, rho)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

fn readout_x<C: LocalCost>(
    z: &EdgeField,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    rho: f64,
) -> Result<NodeField> {
    let dim = costs.first().map(|c| c.dim()).unwrap_or(1);
    check_costs(g, costs, dim)?;
    let mut x = NodeField::zeros(g.n_nodes(), dim);
    let mut s_i = vec![0.0; dim];
    for i in 0..g.n_nodes() {
        s_i.iter_mut().for_each(|v| *v = 0.0);
        for s in idx.node_slots(i) {
            for d in 0..dim {
                s_i[d] += z.slot(s)[d];
            }
        }
        let xi = costs[i].x_update(&s_i, rho, g.degree(i))?;
        x.node_mut(i).copy_from_slice(&xi);
    }
    Ok(x)
}

/// A per-directed-edge message of the compact form:
/// `payload = -z_ji(k) + 2 rho x_i(k)` sent from `i` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QMessage {
    pub sender: usize,
    pub receiver: usize,
    pub payload: Vec<f64>,
}

/// The shared z-update of the compact form. Slot `(i, j)` (variable `z_ji`)
/// moves toward the incoming payload `q_{j->i} = -z_ij(k) + 2 rho x_j(k)`:
///
/// ```text
///   z_ji(k+1) = z_ji(k) + alpha * (q_{j->i} - z_ji(k))
/// ```
///
/// which expands to `(1 - alpha) z_ji(k) - alpha z_ij(k) + 2 alpha rho x_j(k)`.
/// When `lost` marks the transmission `j -> i` as dropped, the slot keeps its
/// round-`k` value bit-for-bit.
fn z_round(
    state: &Alg2State,
    idx: &DirectedEdgeIndex,
    alpha: f64,
    rho: f64,
    lost: Option<&[bool]>,
) -> EdgeField {
    let dim = state.z.dim();
    let two_rho = 2.0 * rho;
    let mut z_new = state.z.clone();
    for s in 0..idx.n_slots() {
        let m = idx.mate(s);
        if let Some(mask) = lost {
            // The update of slot (i, j) consumes the transmission j -> i,
            // whose mask position is the mate slot (j, i).
            if mask[m] {
                continue;
            }
        }
        let (_, j) = idx.pair(s);
        for d in 0..dim {
            let q_ji = -state.z.slot(m)[d] + two_rho * state.x.node(j)[d];
            let zs = state.z.slot(s)[d];
            z_new.slot_mut(s)[d] = zs + alpha * (q_ji - zs);
        }
    }
    z_new
}

/// One synchronous round of the compact form. Returns the new state together
/// with the q-messages of the round (one per directed edge, emitted from
/// round-`k` values).
pub fn alg2_step<C: LocalCost>(
    state: &Alg2State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
) -> Result<(Alg2State, Vec<QMessage>)> {
    validate_step_params(alpha, rho)?;
    let dim = state.z.dim();
    let two_rho = 2.0 * rho;
    let mut messages = Vec::with_capacity(idx.n_slots());
    for s in 0..idx.n_slots() {
        let (i, j) = idx.pair(s);
        // Sender i reads only its own slot (i, j), which holds z_ji.
        let payload: Vec<f64> = (0..dim)
            .map(|d| -state.z.slot(s)[d] + two_rho * state.x.node(i)[d])
            .collect();
        messages.push(QMessage { sender: i, receiver: j, payload });
    }
    let z_new = z_round(state, idx, alpha, rho, None);
    let next = Alg2State::from_z(z_new, g, idx, costs, rho)?;
    Ok((next, messages))
}

/// One synchronous round of the compact form under packet loss: identical to
/// [`alg2_step`] except that each z-update is gated by the loss sample of its
/// incoming transmission ("leave `z_ji` unchanged" on loss).
pub fn alg3_step<C: LocalCost>(
    state: &Alg2State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
    loss: &LossModel,
    k: u64,
) -> Result<Alg2State> {
    validate_step_params(alpha, rho)?;
    let mask = loss.sample_loss_mask(k, idx);
    let z_new = z_round(state, idx, alpha, rho, Some(&mask));
    Alg2State::from_z(z_new, g, idx, costs, rho)
}

// ---------------------------------------------------------------------------
// Packet-loss model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum LossProbs {
    Uniform(f64),
    /// One probability per directed-edge slot.
    PerSlot(Vec<f64>),
}

/// I.i.d. Bernoulli loss over directed transmissions.
///
/// Sampling is counter-based: the decision for transmission `(i, j)` at
/// iteration `k` is a pure function of `(seed, k, i, j)`, so masks are
/// reproducible without storing any stream state and independent of the
/// order in which they are queried.
#[derive(Debug, Clone)]
pub struct LossModel {
    probs: LossProbs,
    seed: u64,
}

fn check_p(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::param(name, format!("loss probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

impl LossModel {
    /// Uniform loss probability on every directed edge.
    pub fn uniform(p: f64, seed: u64) -> Result<Self> {
        check_p("p", p)?;
        Ok(LossModel { probs: LossProbs::Uniform(p), seed })
    }

    /// Heterogeneous per-directed-edge probabilities: `entries` overrides the
    /// default `p` for the listed ordered pairs.
    pub fn per_edge(
        idx: &DirectedEdgeIndex,
        default_p: f64,
        entries: &[(usize, usize, f64)],
        seed: u64,
    ) -> Result<Self> {
        check_p("p", default_p)?;
        let mut probs = vec![default_p; idx.n_slots()];
        let mut seen = vec![false; idx.n_slots()];
        for &(i, j, p) in entries {
            check_p(&format!("p[{i}->{j}]"), p)?;
            let s = idx.slot(i, j).ok_or_else(|| {
                Error::param("p_edges", format!("({i}, {j}) is not a directed edge of the graph"))
            })?;
            if seen[s] {
                return Err(Error::param("p_edges", format!("duplicate entry for ({i}, {j})")));
            }
            seen[s] = true;
            probs[s] = p;
        }
        Ok(LossModel { probs: LossProbs::PerSlot(probs), seed })
    }

    /// Loss probability of the transmission stored at slot `s`.
    pub fn p_of_slot(&self, s: usize) -> f64 {
        match &self.probs {
            LossProbs::Uniform(p) => *p,
            LossProbs::PerSlot(v) => v[s],
        }
    }

    /// Largest per-edge probability (0 means the model is lossless).
    pub fn max_p(&self) -> f64 {
        match &self.probs {
            LossProbs::Uniform(p) => *p,
            LossProbs::PerSlot(v) => v.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Mean per-edge probability (what aggregate reports print for the
    /// heterogeneous model).
    pub fn mean_p(&self, idx: &DirectedEdgeIndex) -> f64 {
        match &self.probs {
            LossProbs::Uniform(p) => *p,
            LossProbs::PerSlot(v) => v.iter().sum::<f64>() / idx.n_slots().max(1) as f64,
        }
    }

    /// Sample the round-`k` mask. Position `s` (ordered pair `(i, j)`) is
    /// `true` when the transmission `i -> j` is lost this round.
    pub fn sample_loss_mask(&self, k: u64, idx: &DirectedEdgeIndex) -> Vec<bool> {
        (0..idx.n_slots())
            .map(|s| {
                let (i, j) = idx.pair(s);
                let code = ((i as u64) << 32) | j as u64;
                u01(derive(self.seed, &[k, code])) < self.p_of_slot(s)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Ordering identity for the stochastic averaged update
// ---------------------------------------------------------------------------

/// Masked averaged update with the loss gate *outside* the averaging:
/// lost positions keep `z`, kept positions take the full averaged step.
///
/// ```text
///   z' = L z + (I - L) [ z + alpha (T z - z) ]
/// ```
pub fn lossy_km_loss_outside(z: &[f64], t_z: &[f64], lost: &[bool], alpha: f64) -> Vec<f64> {
    z.iter()
        .zip(t_z)
        .zip(lost)
        .map(|((zi, ti), &l)| if l { *zi } else { zi + alpha * (ti - zi) })
        .collect()
}

/// Masked averaged update with the loss gate *inside* the operator: the map
/// is first masked (`L z + (I - L) T z`), then averaged.
///
/// ```text
///   z' = z + alpha ( [L z + (I - L) T z] - z )
/// ```
///
/// In increment form both orderings coincide exactly: on a lost position the
/// inner target is `z` itself and the increment is a true zero.
pub fn lossy_km_loss_inside(z: &[f64], t_z: &[f64], lost: &[bool], alpha: f64) -> Vec<f64> {
    z.iter()
        .zip(t_z)
        .zip(lost)
        .map(|((zi, ti), &l)| {
            let target = if l { *zi } else { *ti };
            zi + alpha * (target - zi)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cross-form embedding
// ---------------------------------------------------------------------------

/// Embed a compact-form z-field into explicit-form coordinates via the
/// canonical split into symmetric and antisymmetric parts:
///
/// ```text
///   y_ij = (z_ij + z_ji) / (2 rho)      w_ij = (z_ij - z_ji) / 2
/// ```
///
/// so that `w_ij + rho y_ij = z_ij`. Mind the storage conventions: the w/y
/// slot `(i, j)` holds the `_ij` variable while the z slot `(i, j)` holds
/// `z_ji`, so `z_ij` is read from the mate slot. Starting [`alg1_step`] from
/// this state and [`alg2_step`] from `z` produces matching x-trajectories.
pub fn alg1_state_from_z<C: LocalCost>(
    z: &EdgeField,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    rho: f64,
) -> Result<Alg1State> {
    validate_step_params(0.5, rho)?;
    let dim = z.dim();
    let mut y = EdgeField::zeros(idx, dim);
    let mut w = EdgeField::zeros(idx, dim);
    for s in 0..idx.n_slots() {
        let m = idx.mate(s);
        for d in 0..dim {
            let z_ji = z.slot(s)[d];
            let z_ij = z.slot(m)[d];
            y.slot_mut(s)[d] = (z_ij + z_ji) / (2.0 * rho);
            w.slot_mut(s)[d] = (z_ij - z_ji) / 2.0;
        }
    }
    // The x-init consistent with the embedding is the same readout the
    // compact form uses: sum_j (rho y_ij - w_ij) = sum_j z_ji.
    let mut x = NodeField::zeros(g.n_nodes(), dim);
    let mut s_i = vec![0.0; dim];
    for i in 0..g.n_nodes() {
        s_i.iter_mut().for_each(|v| *v = 0.0);
        for s in idx.node_slots(i) {
            for d in 0..dim {
                s_i[d] += rho * y.slot(s)[d] - w.slot(s)[d];
            }
        }
        let xi = costs[i].x_update(&s_i, rho, g.degree(i))?;
        x.node_mut(i).copy_from_slice(&xi);
    }
    Ok(Alg1State { x, y, w })
}

// ---------------------------------------------------------------------------
// Resource accounting
// ---------------------------------------------------------------------------

/// Per-round, per-node resource formulas: variables updated-and-transmitted
/// and neighbor payload values stored, as a function of the node degree.
///
/// * Explicit form: `(2 d + 1, 3 d)` — two edge variables per neighbor plus
///   the primal are written and sent; each neighbor's `(y, w, x)` triple is
///   received.
/// * Compact form: `(d + 1, d)` — one z-variable per neighbor plus the
///   primal; one q-payload per neighbor.
pub fn resource_counts(variant: Variant, degree: usize) -> Result<(usize, usize)> {
    if degree == 0 {
        return Err(Error::param("degree", "must be at least 1"));
    }
    Ok(match variant {
        Variant::Alg1 => (2 * degree + 1, 3 * degree),
        Variant::Alg2 | Variant::Alg3 => (degree + 1, degree),
    })
}

/// Per-node counters observed by an instrumented round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeCounters {
    /// Variables this node wrote (and would transmit) during the round.
    pub updated_and_sent: usize,
    /// Neighbor payload values this node consumed during the round.
    pub stored: usize,
}

/// [`alg1_step`] with write/receive counting at the actual loop sites.
pub fn alg1_step_instrumented<C: LocalCost>(
    state: &Alg1State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
) -> Result<(Alg1State, Vec<NodeCounters>)> {
    let next = alg1_step(state, g, idx, costs, alpha, rho)?;
    let mut counters = vec![NodeCounters::default(); g.n_nodes()];
    for s in 0..idx.n_slots() {
        let (i, _) = idx.pair(s);
        // Node i wrote y_ij and w_ij ...
        counters[i].updated_and_sent += 2;
        // ... and consumed the neighbor's (y_ji, w_ji, x_j) payload.
        counters[i].stored += 3;
    }
    for c in counters.iter_mut() {
        // The x_i write.
        c.updated_and_sent += 1;
    }
    Ok((next, counters))
}

/// [`alg2_step`] with write/receive counting at the actual loop sites.
pub fn alg2_step_instrumented<C: LocalCost>(
    state: &Alg2State,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
) -> Result<(Alg2State, Vec<QMessage>, Vec<NodeCounters>)> {
    let (next, messages) = alg2_step(state, g, idx, costs, alpha, rho)?;
    let mut counters = vec![NodeCounters::default(); g.n_nodes()];
    for msg in &messages {
        // The receiver consumed one q-payload and wrote the gated z-slot.
        counters[msg.receiver].stored += 1;
        counters[msg.receiver].updated_and_sent += 1;
    }
    for c in counters.iter_mut() {
        c.updated_and_sent += 1;
    }
    Ok((next, messages, counters))
}

// ---------------------------------------------------------------------------
// Lossy exploration of the explicit form
// ---------------------------------------------------------------------------

/// Explicit-form state extended with hold-last-received caches, for
/// *exploratory* lossy runs of the x/y/w form. No convergence claim is made
/// for this mode; it exists behind an explicit opt-in so the behavior can be
/// studied.
#[derive(Debug, Clone)]
pub struct Alg1LossyState {
    pub state: Alg1State,
    /// Slot `(i, j)` caches the latest `x_j` received by `i`.
    rx_x: EdgeField,
    /// Slot `(i, j)` caches the latest `y_ji` received by `i`.
    rx_y: EdgeField,
    /// Slot `(i, j)` caches the latest `w_ji` received by `i`.
    rx_w: EdgeField,
}

impl Alg1LossyState {
    /// Wrap a state, seeding every cache as if one lossless exchange preceded
    /// round zero.
    pub fn new(state: Alg1State, idx: &DirectedEdgeIndex) -> Self {
        let dim = state.x.dim();
        let mut rx_x = EdgeField::zeros(idx, dim);
        let mut rx_y = EdgeField::zeros(idx, dim);
        let mut rx_w = EdgeField::zeros(idx, dim);
        for s in 0..idx.n_slots() {
            let (_, j) = idx.pair(s);
            let m = idx.mate(s);
            rx_x.slot_mut(s).copy_from_slice(state.x.node(j));
            rx_y.slot_mut(s).copy_from_slice(state.y.slot(m));
            rx_w.slot_mut(s).copy_from_slice(state.w.slot(m));
        }
        Alg1LossyState { state, rx_x, rx_y, rx_w }
    }
}

/// One lossy round of the explicit form with hold-last-received semantics:
/// a successful transmission `j -> i` refreshes node `i`'s caches for
/// neighbor `j`; a lost one leaves them stale. The update arithmetic is
/// [`alg1_step`]'s with neighbor values read from the caches.
pub fn alg1_lossy_step<C: LocalCost>(
    ls: &Alg1LossyState,
    g: &Graph,
    idx: &DirectedEdgeIndex,
    costs: &[C],
    alpha: f64,
    rho: f64,
    loss: &LossModel,
    k: u64,
) -> Result<Alg1LossyState> {
    validate_step_params(alpha, rho)?;
    let dim = ls.state.x.dim();
    check_costs(g, costs, dim)?;
    let mask = loss.sample_loss_mask(k, idx);
    let mut rx_x = ls.rx_x.clone();
    let mut rx_y = ls.rx_y.clone();
    let mut rx_w = ls.rx_w.clone();
    for s in 0..idx.n_slots() {
        let (_, j) = idx.pair(s);
        let m = idx.mate(s);
        // The caches at slot (i, j) refresh when transmission j -> i arrives.
        if !mask[m] {
            rx_x.slot_mut(s).copy_from_slice(ls.state.x.node(j));
            rx_y.slot_mut(s).copy_from_slice(ls.state.y.slot(m));
            rx_w.slot_mut(s).copy_from_slice(ls.state.w.slot(m));
        }
    }
    let two_alpha_rho = 2.0 * alpha * rho;
    let shrink = rho * (2.0 * alpha - 1.0);
    let mut y_new = EdgeField::zeros(idx, dim);
    let mut w_new = EdgeField::zeros(idx, dim);
    for s in 0..idx.n_slots() {
        let (i, _) = idx.pair(s);
        for d in 0..dim {
            let (yij, yji) = (ls.state.y.slot(s)[d], rx_y.slot(s)[d]);
            let (wij, wji) = (ls.state.w.slot(s)[d], rx_w.slot(s)[d]);
            let (xi, xj) = (ls.state.x.node(i)[d], rx_x.slot(s)[d]);
            y_new.slot_mut(s)[d] =
                ((wij + wji) + two_alpha_rho * (xi + xj) - shrink * (yij + yji)) / (2.0 * rho);
            w_new.slot_mut(s)[d] =
                ((wij - wji) + two_alpha_rho * (xi - xj) - shrink * (yij - yji)) / 2.0;
        }
    }
    let mut x_new = NodeField::zeros(g.n_nodes(), dim);
    let mut s_i = vec![0.0; dim];
    for i in 0..g.n_nodes() {
        s_i.iter_mut().for_each(|v| *v = 0.0);
        for s in idx.node_slots(i) {
            for d in 0..dim {
                s_i[d] += rho * y_new.slot(s)[d] - w_new.slot(s)[d];
            }
        }
        let xi = costs[i].x_update(&s_i, rho, g.degree(i))?;
        x_new.node_mut(i).copy_from_slice(&xi);
    }
    Ok(Alg1LossyState {
        state: Alg1State { x: x_new, y: y_new, w: w_new },
        rx_x,
        rx_y,
        rx_w,
    })
}
