//! Deterministic random-number streams.
//!
//! Every random draw in the crate goes through an explicitly seeded
//! [`RngStream`]. A root seed spawns named substreams (`events`,
//! `activations`, `gf-choices`, ...) so that adding a consumer never
//! perturbs the draws seen by another: substreams are derived from the
//! parent *seed*, not from its consumed state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Derive a child seed from a root seed, a label, and an index.
///
/// Stable across platforms and releases: FNV-1a over the label folded into
/// the root through two splitmix64 rounds.
pub fn subseed(root: u64, label: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(index))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded pseudo-random stream; identical seeds yield identical draws for
/// identical call sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A named child stream, independent of how much of `self` was consumed.
    pub fn substream(&self, label: &str) -> RngStream {
        RngStream::new(subseed(self.seed, label, 0))
    }

    /// A named and indexed child stream (per-seed, per-device, ...).
    pub fn substream_indexed(&self, label: &str, index: u64) -> RngStream {
        RngStream::new(subseed(self.seed, label, index))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Bernoulli draw with success probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.rng.gen::<f64>() < p
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.gen::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}
