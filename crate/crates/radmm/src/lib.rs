//! Distributed consensus convex optimization over synchronous, lossy networks.
//!
//! The library implements the relaxed ADMM (R-ADMM) family obtained by applying
//! relaxed Peaceman-Rachford splitting to the dual of the consensus problem
//!
//! ```text
//!   minimize   sum_i f_i(x)        over a connected communication graph,
//! ```
//!
//! in three equivalent distributed forms:
//!
//! * **Algorithm 1** — the explicit form with per-edge bridge variables `y_ij`
//!   and multipliers `w_ij` (two variables per directed edge plus the local
//!   primal `x_i`);
//! * **Algorithm 2** — the compact form that keeps a single per-directed-edge
//!   variable `z_ji` and exchanges scalar-per-edge `q` messages;
//! * **Algorithm 3** — Algorithm 2 under i.i.d. Bernoulli packet loss: a lost
//!   `q` message simply leaves the corresponding `z` variable unchanged.
//!
//! Module map:
//!
//! * [`splitting`] — centralized operator-splitting primitives (prox, reflection,
//!   Krasnosel'skii-Mann step, relaxed Peaceman-Rachford solver);
//! * [`graph`] — communication graphs, the directed-edge slot index realizing the
//!   swap permutation `P`, and per-node/per-edge field storage;
//! * [`costs`] — quadratic local costs, their closed-form updates, and the
//!   centralized optimum used for error reporting;
//! * [`consensus`] — the three synchronous-round state machines and the
//!   packet-loss model;
//! * [`experiments`] — seeded Monte-Carlo traces, stability sweeps, step-size
//!   studies, and their CSV serializations;
//! * [`rng`] — the pinned portable generator (SplitMix64) every stochastic
//!   feature derives from.
//!
//! Determinism is a hard guarantee throughout: given a master seed, every graph
//! draw, cost draw, initial condition, and loss mask is reproducible bit-for-bit
//! regardless of platform or thread count.

pub mod consensus;
pub mod costs;
pub mod error;
pub mod experiments;
pub mod graph;
mod linalg;
pub mod rng;
pub mod splitting;

pub use error::{Error, Result};
