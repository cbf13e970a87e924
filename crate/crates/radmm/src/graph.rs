//! Communication graphs and per-edge variable indexing.
//!
//! The distributed algorithms keep one variable per *directed* edge (the pair
//! `(i, j)` with `j` a neighbor of `i`). [`DirectedEdgeIndex`] flattens those
//! pairs into contiguous slots grouped by first node, and records each slot's
//! *mate* — the slot of the reversed pair. The mate table realizes the swap
//! permutation `P` implicitly: the matrix is never materialized, and every
//! `(I + P)` / `(I - P)` product reduces to the per-edge sums and differences
//! of [`EdgeField::pair_sum`] and [`EdgeField::pair_diff`].

use crate::error::{Error, Result};
use crate::rng::{derive, SplitMix64};

/// Redraw budget for connected random-geometric sampling.
pub const RGG_RETRY_CAP: usize = 1000;

/// Undirected communication graph with sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
    /// Unordered edges stored as `(min, max)`, sorted.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build a graph from an unordered edge list. Rejects self-loops,
    /// duplicate edges, and out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 1 {
            return Err(Error::param("n", "graph needs at least one node"));
        }
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::param("edges", format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::param("edges", format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        if canon.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("edges", "duplicate edge"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &canon {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph { n, neighbors, edges: canon })
    }

    /// Cycle graph `0 - 1 - ... - (n-1) - 0`.
    ///
    /// `n = 2` degenerates to a single edge and is accepted with a warning;
    /// `n <= 1` is rejected.
    pub fn cycle(n: usize) -> Result<Self> {
        if n <= 1 {
            return Err(Error::param("n", format!("cycle graph needs n >= 2, got {n}")));
        }
        if n == 2 {
            log::warn!("cycle graph with n = 2 degenerates to a single edge");
            return Graph::from_edges(2, &[(0, 1)]);
        }
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges)
    }

    /// Connected random geometric graph: `n` points uniform on the unit
    /// square, an edge wherever the Euclidean distance is below `radius`.
    ///
    /// Disconnected draws are redrawn from derived sub-seeds up to
    /// [`RGG_RETRY_CAP`] attempts; exhausting the cap reports the `(n, radius)`
    /// pair as infeasible. Identical seeds reproduce identical graphs on every
    /// platform (the point stream comes from the pinned generator).
    pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("random geometric graph needs n >= 2, got {n}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", format!("must be finite and > 0, got {radius}")));
        }
        for attempt in 0..RGG_RETRY_CAP {
            let mut rng = SplitMix64::new(derive(seed, &[attempt as u64]));
            let points: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let dx = points[i].0 - points[j].0;
                    let dy = points[i].1 - points[j].1;
                    if (dx * dx + dy * dy).sqrt() < radius {
                        edges.push((i, j));
                    }
                }
            }
            let g = Graph::from_edges(n, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::InfeasibleGraph { n, radius, attempts: RGG_RETRY_CAP })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Unordered edges as `(min, max)` pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// True iff a breadth-first traversal from node 0 reaches every node.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Serialize to the plain edge-list format: first line `N`, then one
    /// `i j` pair per line, zero-indexed.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    /// Parse the edge-list format produced by [`Graph::to_edge_list`].
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (line_no, first) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, reason: "empty input".into() })?;
        let n: usize = first.trim().parse().map_err(|_| Error::Parse {
            line: line_no + 1,
            reason: format!("expected node count, got {first:?}"),
        })?;
        let mut edges = Vec::new();
        for (line_no, line) in lines {
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| Error::Parse {
                    line: line_no + 1,
                    reason: "expected `i j`".into(),
                })?
                .parse()
                .map_err(|_| Error::Parse {
                    line: line_no + 1,
                    reason: format!("bad index in {line:?}"),
                })
            };
            let a = parse(it.next())?;
            let b = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: line_no + 1,
                    reason: format!("trailing tokens in {line:?}"),
                });
            }
            edges.push((a, b));
        }
        Graph::from_edges(n, &edges)
    }
}

/// Flat index over directed neighbor pairs.
///
/// Slot order is lexicographic `(i, j)`, so the slots owned by node `i`
/// (pairs with first coordinate `i`) are contiguous — node-local state lives
/// in one block. `mate(s)` is the slot of the reversed pair, i.e. the action
/// of the swap permutation `P`.
#[derive(Debug, Clone)]
pub struct DirectedEdgeIndex {
    slots: Vec<(usize, usize)>,
    mate: Vec<usize>,
    /// `node_start[i]..node_start[i + 1]` is node `i`'s slot range.
    node_start: Vec<usize>,
}

impl DirectedEdgeIndex {
    pub fn new(g: &Graph) -> Self {
        let n = g.n_nodes();
        let mut slots = Vec::with_capacity(2 * g.n_edges());
        let mut node_start = Vec::with_capacity(n + 1);
        for i in 0..n {
            node_start.push(slots.len());
            for &j in g.neighbors(i) {
                slots.push((i, j));
            }
        }
        node_start.push(slots.len());
        let mut mate = vec![0; slots.len()];
        for (s, &(i, j)) in slots.iter().enumerate() {
            // Neighbor lists are sorted, so the reversed pair is found by
            // binary search inside node j's block.
            let pos = g.neighbors(j).binary_search(&i).expect("symmetric neighbor lists");
            mate[s] = node_start[j] + pos;
        }
        DirectedEdgeIndex { slots, mate, node_start }
    }

    /// Total number of slots, `2 |E|`.
    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// The ordered pair stored at slot `s`.
    pub fn pair(&self, s: usize) -> (usize, usize) {
        self.slots[s]
    }

    /// Slot of the reversed pair.
    pub fn mate(&self, s: usize) -> usize {
        self.mate[s]
    }

    /// Slot of the ordered pair `(i, j)`, if `j` is a neighbor of `i`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let block = &self.slots[self.node_start[i]..self.node_start[i + 1]];
        block
            .binary_search_by_key(&j, |&(_, jj)| jj)
            .ok()
            .map(|pos| self.node_start[i] + pos)
    }

    /// Contiguous slot range owned by node `i`.
    pub fn node_slots(&self, i: usize) -> std::ops::Range<usize> {
        self.node_start[i]..self.node_start[i + 1]
    }

    pub fn n_nodes(&self) -> usize {
        self.node_start.len() - 1
    }
}

/// Per-node vector field (`dim` components per node, flat storage).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    dim: usize,
    data: Vec<f64>,
}

impl NodeField {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        NodeField { dim, data: vec![0.0; n_nodes * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-directed-edge vector field (`dim` components per slot, flat storage).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    dim: usize,
    data: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(idx: &DirectedEdgeIndex, dim: usize) -> Self {
        EdgeField { dim, data: vec![0.0; idx.n_slots() * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_slots(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn slot(&self, s: usize) -> &[f64] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn slot_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The `(I + P)` action: slot `(i, j)` of the result holds `t_ij + t_ji`.
    pub fn pair_sum(&self, idx: &DirectedEdgeIndex) -> EdgeField {
        self.pair_combine(idx, |a, b| a + b)
    }

    /// The `(I - P)` action: slot `(i, j)` of the result holds `t_ij - t_ji`.
    pub fn pair_diff(&self, idx: &DirectedEdgeIndex) -> EdgeField {
        self.pair_combine(idx, |a, b| a - b)
    }

    /// The `P` action alone: slot `(i, j)` of the result holds `t_ji`.
    pub fn swap(&self, idx: &DirectedEdgeIndex) -> EdgeField {
        let mut out = EdgeField { dim: self.dim, data: vec![0.0; self.data.len()] };
        for s in 0..idx.n_slots() {
            let m = idx.mate(s);
            out.slot_mut(s).copy_from_slice(self.slot(m));
        }
        out
    }

    fn pair_combine(&self, idx: &DirectedEdgeIndex, op: impl Fn(f64, f64) -> f64) -> EdgeField {
        assert_eq!(self.n_slots(), idx.n_slots(), "field does not match index");
        let mut out = EdgeField { dim: self.dim, data: vec![0.0; self.data.len()] };
        for s in 0..idx.n_slots() {
            let m = idx.mate(s);
            for d in 0..self.dim {
                out.data[s * self.dim + d] =
                    op(self.data[s * self.dim + d], self.data[m * self.dim + d]);
            }
        }
        out
    }
}
