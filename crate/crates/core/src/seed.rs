//! Seed derivation.
//!
//! Every source of randomness in the simulator is a [`ChaCha8Rng`] whose seed
//! is derived from the single master seed with [`derive_seed`]. The derivation
//! is a fixed SplitMix64 chain over `(master, domain, indices...)`, so any two
//! call sites that pass the same key material observe the same stream no
//! matter when or on which thread they run. That is what makes runs
//! bit-reproducible and schedule-independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated consumers of the master seed decorrelated.
pub mod domain {
    pub const SPLIT: u64 = 0x01;
    pub const PARTITION: u64 = 0x02;
    pub const PUBLIC_MASK: u64 = 0x03;
    pub const PARAM_INIT: u64 = 0x04;
    pub const CLIENT_ROUND: u64 = 0x05;
    pub const CLIENT_SELECT: u64 = 0x06;
    pub const EVAL_NEGATIVES: u64 = 0x07;
    pub const SUBGRAPH: u64 = 0x08;
    pub const DROP_NODE: u64 = 0x09;
    pub const NEGATIVES: u64 = 0x0a;
    pub const MASK_ROUND: u64 = 0x0b;
    pub const SYNTH: u64 = 0x0c;
    pub const TUNING: u64 = 0x0d;
    pub const EPOCH_SHUFFLE: u64 = 0x0e;
}

/// SplitMix64 finalizer; the standard 64-bit avalanche.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one word at a time.
///
/// The chain is order-sensitive, so `derive_seed(s, &[a, b])` and
/// `derive_seed(s, &[b, a])` differ.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// Deterministic generator for a derived seed.
pub fn seeded_rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
