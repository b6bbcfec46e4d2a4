//! Synthetic block-structured interaction data for tests and demos.
//!
//! Users and items are divided into `blocks` preference groups; every user
//! interacts only with items from their own block. A recommender that learns
//! the block structure can rank the held-out in-block items far above the
//! out-of-block ones, which makes these datasets a cheap end-to-end sanity
//! check with a known-good signal.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::seed::{self, domain};

/// Shape of a generated block dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    /// Distinct in-block items each user interacts with (clamped to the
    /// block size).
    pub events_per_user: usize,
    /// Timestamps are drawn uniformly from `[0, time_span)`.
    #[serde(default = "default_time_span")]
    pub time_span: i64,
}

fn default_time_span() -> i64 {
    100_000
}

/// Generates the dataset described by `spec`, deterministically in `seed`.
pub fn block_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.users == 0 || spec.items == 0 || spec.blocks == 0 {
        return Err(Error::Config("synthetic spec needs users, items, and blocks ≥ 1".into()));
    }
    if spec.blocks > spec.users || spec.blocks > spec.items {
        return Err(Error::Config("synthetic spec has more blocks than users or items".into()));
    }
    if spec.time_span <= 0 {
        return Err(Error::Config("synthetic time span must be positive".into()));
    }

    let mut interactions = Vec::with_capacity(spec.users * spec.events_per_user);
    for u in 0..spec.users {
        let block = u * spec.blocks / spec.users;
        let lo = block * spec.items / spec.blocks;
        let hi = (block + 1) * spec.items / spec.blocks;
        let mut pool: Vec<usize> = (lo..hi).collect();
        let mut rng = seed::seeded_rng(seed, &[domain::SYNTH, u as u64]);
        pool.shuffle(&mut rng);
        let take = spec.events_per_user.min(pool.len());
        for &item in pool.iter().take(take) {
            let timestamp = rng.gen_range(0..spec.time_span);
            interactions.push(Interaction { user: u, item, rating: 1.0, timestamp });
        }
    }
    Dataset::from_parts(interactions, spec.users, spec.items)
}

/// The item block a user belongs to, mirroring the generator's layout.
pub fn block_of_user(spec: &SyntheticSpec, user: usize) -> usize {
    user * spec.blocks / spec.users
}

/// The item index range owned by `block`.
pub fn items_of_block(spec: &SyntheticSpec, block: usize) -> std::ops::Range<usize> {
    let lo = block * spec.items / spec.blocks;
    let hi = (block + 1) * spec.items / spec.blocks;
    lo..hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respects_block_membership() {
        let spec = SyntheticSpec { users: 10, items: 20, blocks: 2, events_per_user: 5, time_span: 1000 };
        let ds = block_dataset(&spec, 42).unwrap();
        assert_eq!(ds.len(), 50);
        for it in &ds.interactions {
            let block = block_of_user(&spec, it.user);
            assert!(items_of_block(&spec, block).contains(&it.item));
            assert!((0..1000).contains(&it.timestamp));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticSpec { users: 6, items: 12, blocks: 3, events_per_user: 4, time_span: 500 };
        let a = block_dataset(&spec, 7).unwrap();
        let b = block_dataset(&spec, 7).unwrap();
        assert_eq!(a.interactions, b.interactions);
        let c = block_dataset(&spec, 8).unwrap();
        assert_ne!(a.interactions, c.interactions);
    }

    #[test]
    fn clamps_events_to_block_size() {
        let spec = SyntheticSpec { users: 4, items: 8, blocks: 2, events_per_user: 99, time_span: 100 };
        let ds = block_dataset(&spec, 1).unwrap();
        // Each user covers all 4 items of its block, no more.
        assert_eq!(ds.len(), 16);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let spec = SyntheticSpec { users: 2, items: 4, blocks: 3, events_per_user: 1, time_span: 10 };
        assert!(block_dataset(&spec, 0).is_err());
    }
}
