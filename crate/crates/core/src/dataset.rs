//! Interaction data: ingestion, filtering, splitting, client partitioning.
//!
//! The on-disk format is a four-column TSV (`user<TAB>item<TAB>rating<TAB>timestamp`).
//! Raw string ids are remapped to dense indices in first-appearance order and
//! the remap tables are kept so they can be exported next to the archive.
//!
//! All sampling here (splits, shard assignment, public masks) is keyed by
//! `(seed, domain, user)` so the same user receives the same assignment
//! whether the operation runs on the full dataset or on a shard that
//! contains them.

use std::collections::HashSet;
use std::io::BufRead;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{self, domain};

/// One user-item event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: i64,
}

/// A normalized interaction set over dense user/item indices.
///
/// Interactions are kept sorted by `(user, timestamp, item)`; per-user runs
/// are contiguous and addressable through `user_range`.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub n_users: usize,
    pub n_items: usize,
    /// CSR-style offsets: user `u` owns `interactions[offsets[u]..offsets[u+1]]`.
    offsets: Vec<usize>,
}

/// Raw-id ↔ dense-index correspondence captured during ingestion.
#[derive(Debug, Clone, Default)]
pub struct RemapTables {
    /// `users[dense]` is the raw user id.
    pub users: Vec<String>,
    /// `items[dense]` is the raw item id.
    pub items: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from parts, sorting interactions into canonical order.
    pub fn from_parts(mut interactions: Vec<Interaction>, n_users: usize, n_items: usize) -> Result<Self> {
        for it in &interactions {
            if it.user >= n_users || it.item >= n_items {
                return Err(Error::Config(format!(
                    "interaction ({}, {}) out of bounds for {} users / {} items",
                    it.user, it.item, n_users, n_items
                )));
            }
        }
        interactions.sort_by(|a, b| {
            (a.user, a.timestamp, a.item)
                .cmp(&(b.user, b.timestamp, b.item))
        });
        let mut offsets = vec![0usize; n_users + 1];
        for it in &interactions {
            offsets[it.user + 1] += 1;
        }
        for u in 0..n_users {
            offsets[u + 1] += offsets[u];
        }
        Ok(Dataset { interactions, n_users, n_items, offsets })
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// The contiguous interaction run belonging to `user`.
    pub fn user_range(&self, user: usize) -> &[Interaction] {
        &self.interactions[self.offsets[user]..self.offsets[user + 1]]
    }

    /// Global indices of `user`'s interactions.
    pub fn user_indices(&self, user: usize) -> std::ops::Range<usize> {
        self.offsets[user]..self.offsets[user + 1]
    }

    /// Users that own at least one interaction.
    pub fn present_users(&self) -> Vec<usize> {
        (0..self.n_users).filter(|&u| self.offsets[u + 1] > self.offsets[u]).collect()
    }

    /// Distinct items `user` has interacted with.
    pub fn items_of(&self, user: usize) -> HashSet<usize> {
        self.user_range(user).iter().map(|it| it.item).collect()
    }

    /// Keeps the interactions selected by `keep`, preserving vocabulary sizes.
    pub fn filtered_by_index(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let interactions: Vec<Interaction> = self
            .interactions
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, it)| *it)
            .collect();
        Dataset::from_parts(interactions, self.n_users, self.n_items)
            .expect("subset of a valid dataset is valid")
    }
}

/// Parses the TSV interaction format, densifying ids in first-appearance order.
pub fn load_interactions<R: BufRead>(reader: R) -> Result<(Dataset, RemapTables)> {
    let mut users: Vec<String> = Vec::new();
    let mut items: Vec<String> = Vec::new();
    let mut user_index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut item_index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut interactions = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].parse().map_err(|_| Error::MalformedRecord {
            line: lineno,
            reason: format!("unparseable rating {:?}", fields[2]),
        })?;
        if !rating.is_finite() {
            return Err(Error::MalformedRecord { line: lineno, reason: "non-finite rating".into() });
        }
        let timestamp: i64 = fields[3].parse().map_err(|_| Error::MalformedRecord {
            line: lineno,
            reason: format!("unparseable timestamp {:?}", fields[3]),
        })?;
        if timestamp < 0 {
            return Err(Error::MalformedRecord { line: lineno, reason: "negative timestamp".into() });
        }
        let user = *user_index.entry(fields[0].to_string()).or_insert_with(|| {
            users.push(fields[0].to_string());
            users.len() - 1
        });
        let item = *item_index.entry(fields[1].to_string()).or_insert_with(|| {
            items.push(fields[1].to_string());
            items.len() - 1
        });
        interactions.push(Interaction { user, item, rating, timestamp });
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset(" (no interaction records)".into()));
    }
    let ds = Dataset::from_parts(interactions, users.len(), items.len())?;
    Ok((ds, RemapTables { users, items }))
}

/// Iteratively removes users *and* items with fewer than `min_count`
/// interactions until a fixpoint, then re-densifies both index spaces.
///
/// Thresholding both sides is what makes the removal cascade: dropping a thin
/// user can push an item under the bar, which in turn can take other users
/// with it.
pub fn filter_min_interactions(ds: &Dataset, min_count: usize) -> Result<(Dataset, Vec<usize>, Vec<usize>)> {
    let mut live: Vec<bool> = vec![true; ds.interactions.len()];
    loop {
        let mut user_counts = vec![0usize; ds.n_users];
        let mut item_counts = vec![0usize; ds.n_items];
        for (i, it) in ds.interactions.iter().enumerate() {
            if live[i] {
                user_counts[it.user] += 1;
                item_counts[it.item] += 1;
            }
        }
        let mut changed = false;
        for (i, it) in ds.interactions.iter().enumerate() {
            if live[i]
                && ((user_counts[it.user] > 0 && user_counts[it.user] < min_count)
                    || (item_counts[it.item] > 0 && item_counts[it.item] < min_count))
            {
                live[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let survivors: Vec<Interaction> = ds
        .interactions
        .iter()
        .zip(&live)
        .filter(|(_, &l)| l)
        .map(|(it, _)| *it)
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyDataset(format!(" after min-interaction filter ({min_count})")));
    }

    // Re-densify, preserving the relative order of the old indices.
    let mut kept_users: Vec<usize> = survivors.iter().map(|it| it.user).collect();
    kept_users.sort_unstable();
    kept_users.dedup();
    let mut kept_items: Vec<usize> = survivors.iter().map(|it| it.item).collect();
    kept_items.sort_unstable();
    kept_items.dedup();
    let mut user_map = vec![usize::MAX; ds.n_users];
    for (new, &old) in kept_users.iter().enumerate() {
        user_map[old] = new;
    }
    let mut item_map = vec![usize::MAX; ds.n_items];
    for (new, &old) in kept_items.iter().enumerate() {
        item_map[old] = new;
    }
    let remapped: Vec<Interaction> = survivors
        .into_iter()
        .map(|it| Interaction { user: user_map[it.user], item: item_map[it.item], ..it })
        .collect();
    let filtered = Dataset::from_parts(remapped, kept_users.len(), kept_items.len())?;
    Ok((filtered, kept_users, kept_items))
}

/// Which split an interaction landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Split policy. The default is a per-user 80/10/10 with floored part sizes
/// and the remainder handed to validation before test. `EightyTwenty`
/// re-splits per user into 80% train / 20% test and then carves 10% of the
/// train run out as validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    EightyTenTen,
    EightyTwenty,
}

/// Train/val/test datasets plus the tuning subset drawn from train.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub tuning: Dataset,
}

/// Per-interaction split assignment, keyed by `(seed, user)` only, so the
/// assignment of a user is identical on the full dataset and on any shard
/// containing them.
pub fn split_assignment(ds: &Dataset, seed: u64, mode: SplitMode) -> Vec<SplitPart> {
    let mut parts = vec![SplitPart::Train; ds.interactions.len()];
    for u in 0..ds.n_users {
        let range = ds.user_indices(u);
        let n = range.len();
        if n == 0 {
            continue;
        }
        let mut order: Vec<usize> = range.clone().collect();
        let mut rng = seed::seeded_rng(seed, &[domain::SPLIT, u as u64]);
        order.shuffle(&mut rng);
        let (n_train, n_val, n_test) = match mode {
            SplitMode::EightyTenTen => {
                let t = (n * 8) / 10;
                let v = n / 10;
                let s = n / 10;
                let rem = n - t - v - s;
                // Remainder goes to validation first, then test.
                (t, v + rem.min(1), s + rem.saturating_sub(1))
            }
            SplitMode::EightyTwenty => {
                let s = (n * 2) / 10;
                let t_full = n - s;
                let v = t_full / 10;
                (t_full - v, v, s)
            }
        };
        for (pos, &idx) in order.iter().enumerate() {
            parts[idx] = if pos < n_train {
                SplitPart::Train
            } else if pos < n_train + n_val {
                SplitPart::Val
            } else {
                SplitPart::Test
            };
        }
        debug_assert_eq!(n_train + n_val + n_test, n);
    }
    parts
}

/// Marks a seeded 10% (floored, per user) of the train interactions for
/// hyperparameter tuning.
pub fn tuning_mask(ds: &Dataset, assignment: &[SplitPart], seed: u64) -> Vec<bool> {
    let mut mask = vec![false; ds.interactions.len()];
    for u in 0..ds.n_users {
        let train_idx: Vec<usize> = ds
            .user_indices(u)
            .filter(|&i| assignment[i] == SplitPart::Train)
            .collect();
        let take = train_idx.len() / 10;
        if take == 0 {
            continue;
        }
        let mut order = train_idx;
        let mut rng = seed::seeded_rng(seed, &[domain::TUNING, u as u64]);
        order.shuffle(&mut rng);
        for &i in order.iter().take(take) {
            mask[i] = true;
        }
    }
    mask
}

/// Materializes the per-user split into train/val/test/tuning datasets.
pub fn split(ds: &Dataset, seed: u64, mode: SplitMode) -> SplitBundle {
    let assignment = split_assignment(ds, seed, mode);
    let tuning = tuning_mask(ds, &assignment, seed);
    SplitBundle {
        train: ds.filtered_by_index(|i| assignment[i] == SplitPart::Train),
        val: ds.filtered_by_index(|i| assignment[i] == SplitPart::Val),
        test: ds.filtered_by_index(|i| assignment[i] == SplitPart::Test),
        tuning: ds.filtered_by_index(|i| tuning[i]),
    }
}

/// One simulated participant: a user-disjoint slice of the dataset.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    /// Global indices of the users assigned to this client.
    pub users: Vec<usize>,
    /// The full local data of those users; indices stay global.
    pub data: Dataset,
    /// |D_k|: the shard's interaction count, used as the aggregation weight.
    pub sample_count: usize,
}

/// Deals users round-robin into `k` shards after a seeded shuffle.
pub fn partition_clients(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<ClientShard>> {
    let present = ds.present_users();
    if k == 0 {
        return Err(Error::Config("client count must be at least 1".into()));
    }
    if k > present.len() {
        return Err(Error::Config(format!(
            "cannot partition {} users into {} clients",
            present.len(),
            k
        )));
    }
    let mut order = present;
    let mut rng = seed::seeded_rng(seed, &[domain::PARTITION]);
    order.shuffle(&mut rng);

    let mut shards = Vec::with_capacity(k);
    for client_id in 0..k {
        let mut users: Vec<usize> = order.iter().copied().skip(client_id).step_by(k).collect();
        users.sort_unstable();
        let member: HashSet<usize> = users.iter().copied().collect();
        let data = ds.filtered_by_index(|i| member.contains(&ds.interactions[i].user));
        let sample_count = data.len();
        shards.push(ClientShard { client_id, users, data, sample_count });
    }
    Ok(shards)
}

/// Flags ⌈p·count⌉ of each user's interactions as publicly shareable.
///
/// The mask is aligned with `shard.data.interactions`; the choice is uniform
/// without replacement and independent per user.
pub fn apply_public_ratio(shard: &ClientShard, p: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Config(format!("public ratio must lie in [0, 1], got {p}")));
    }
    let mut mask = vec![false; shard.data.len()];
    for &u in &shard.users {
        let idx: Vec<usize> = shard.data.user_indices(u).collect();
        let take = (p * idx.len() as f64).ceil() as usize;
        let take = take.min(idx.len());
        if take == 0 {
            continue;
        }
        let mut order = idx;
        let mut rng = seed::seeded_rng(seed, &[domain::PUBLIC_MASK, u as u64]);
        order.shuffle(&mut rng);
        for &i in order.iter().take(take) {
            mask[i] = true;
        }
    }
    Ok(mask)
}

/// Convenience wrapper: a line-oriented reader over a path.
pub fn load_interactions_path(path: &std::path::Path) -> Result<(Dataset, RemapTables)> {
    let file = std::fs::File::open(path)?;
    load_interactions(std::io::BufReader::new(file))
}
