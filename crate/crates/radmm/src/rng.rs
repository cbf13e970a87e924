//! Pinned portable pseudo-random generator.
//!
//! Every stochastic feature of the artifact — node placement for geometric
//! graphs, cost coefficients, initial conditions, and per-message loss masks —
//! flows from a single master seed through [`derive`], so results reproduce
//! bit-for-bit across platforms, processes, and thread schedules.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's 64-bit finalizer-based
//! generator, as published in the Java 8 `SplittableRandom` reference and the
//! xoshiro seeding material). It is chosen because it is tiny, fully specified
//! by two multiply-xorshift constants, and stateless to re-derive: sub-streams
//! are obtained by hashing, not by consuming a shared stream, which is what
//! makes counter-based loss sampling and schedule-independent parallelism
//! possible.

/// Weyl-sequence increment (the golden-ratio constant) used by SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Sub-seed tag: per-run stream root (combined with the run index).
pub const TAG_RUN: u64 = 1;
/// Sub-seed tag: graph draw for one run.
pub const TAG_GRAPH: u64 = 2;
/// Sub-seed tag: cost draw for one run.
pub const TAG_COST: u64 = 3;
/// Sub-seed tag: loss-mask stream for one run.
pub const TAG_LOSS: u64 = 4;
/// Sub-seed tag: initial-condition draw for one run.
pub const TAG_INIT: u64 = 5;

/// The SplitMix64 output finalizer: a bijective avalanche mix of one 64-bit word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `seed` and an ordered tag list.
///
/// Each tag folds in one mixing round: `h <- mix64(h + GOLDEN_GAMMA + tag)`.
/// The tag order matters (`derive(s, &[1, 2]) != derive(s, &[2, 1])`), which is
/// what lets disjoint tag prefixes carve out independent stream families.
#[inline]
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut h = seed;
    for &t in tags {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(t));
    }
    h
}

/// Map a 64-bit word to a double in `[0, 1)` using its top 53 bits.
#[inline]
pub fn u01(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        u01(self.next_u64())
    }

    /// Uniform draw in `[lo, hi)` (degenerate `lo == hi` returns `lo`).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
