//! Implicit user-user and item-item relations derived from interactions.
//!
//! No explicit social network is ingested; the user side is reconstructed
//! through a temporal-precedence proxy: user `j` "follows" user `i` when they
//! share an item that `i` reached first. Two users are implicitly related
//! when enough distinct users follow both of them.
//!
//! The item side uses a count-shrunk cosine over the ratings of common users,
//! so that thin overlaps cannot produce confident edges.

use std::collections::HashMap;

use crate::dataset::Dataset;

/// Which side of the bipartite universe the edges connect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitKind {
    UserUser,
    ItemItem,
}

/// Weighted directed edges, capped per source, highest weight first.
#[derive(Debug, Clone)]
pub struct ImplicitEdges {
    pub kind: ImplicitKind,
    adj: Vec<Vec<(usize, f64)>>,
}

impl ImplicitEdges {
    pub fn empty(kind: ImplicitKind, n: usize) -> Self {
        ImplicitEdges { kind, adj: vec![Vec::new(); n] }
    }

    /// Neighbors of `src`, ordered by descending weight (ties by index).
    pub fn neighbors(&self, src: usize) -> &[(usize, f64)] {
        &self.adj[src]
    }

    /// All edges as `(src, dst, weight)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(src, row)| row.iter().map(move |&(dst, w)| (src, dst, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    fn from_pairs(kind: ImplicitKind, n: usize, pairs: HashMap<(usize, usize), f64>, top_m: usize) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &w) in &pairs {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for row in &mut adj {
            row.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite weights").then(x.0.cmp(&y.0)));
            row.truncate(top_m);
        }
        ImplicitEdges { kind, adj }
    }
}

/// Earliest interaction timestamp per (user, item), exploiting the dataset's
/// per-user chronological order.
fn earliest_per_item(ds: &Dataset) -> Vec<Vec<(usize, i64)>> {
    // item -> [(user, earliest_ts)]
    let mut firsts: Vec<HashMap<usize, i64>> = vec![HashMap::new(); ds.n_items];
    for it in &ds.interactions {
        firsts[it.item].entry(it.user).or_insert(it.timestamp);
    }
    firsts
        .into_iter()
        .map(|m| {
            let mut v: Vec<(usize, i64)> = m.into_iter().collect();
            v.sort_by_key(|&(u, t)| (t, u));
            v
        })
        .collect()
}

/// Builds implicit user edges: weight = number of distinct common followers,
/// kept when it reaches `tau`, capped at `top_m` per source.
pub fn implicit_user_relations(ds: &Dataset, tau: usize, top_m: usize) -> ImplicitEdges {
    // follower j -> set of users j follows (j reached a shared item strictly
    // later than they did).
    let mut follows: Vec<Vec<usize>> = vec![Vec::new(); ds.n_users];
    for arrivals in earliest_per_item(ds) {
        for (later_pos, &(j, t_j)) in arrivals.iter().enumerate() {
            for &(i, t_i) in &arrivals[..later_pos] {
                if t_j > t_i {
                    follows[j].push(i);
                }
            }
        }
    }
    for list in &mut follows {
        list.sort_unstable();
        list.dedup();
    }

    // Count distinct common followers per followee pair.
    let mut common: HashMap<(usize, usize), f64> = HashMap::new();
    for followees in &follows {
        for (pos, &a) in followees.iter().enumerate() {
            for &b in &followees[pos + 1..] {
                *common.entry((a, b)).or_insert(0.0) += 1.0;
            }
        }
    }
    common.retain(|_, w| *w >= tau as f64);
    ImplicitEdges::from_pairs(ImplicitKind::UserUser, ds.n_users, common, top_m)
}

/// Builds implicit item edges: cosine similarity of the two items' rating
/// vectors over their common users, shrunk by `n / (n + shrinkage)` where
/// `n` is the common-user count. Non-positive weights are dropped.
pub fn implicit_item_relations(ds: &Dataset, top_m: usize, shrinkage: f64) -> ImplicitEdges {
    // Mean rating per (user, item): repeat interactions collapse to one entry.
    let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ds.n_users];
    for (u, slot) in per_user.iter_mut().enumerate() {
        let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
        for it in ds.user_range(u) {
            let e = sums.entry(it.item).or_insert((0.0, 0));
            e.0 += it.rating;
            e.1 += 1;
        }
        let mut items: Vec<(usize, f64)> = sums
            .into_iter()
            .map(|(item, (sum, cnt))| (item, sum / cnt as f64))
            .collect();
        items.sort_by_key(|&(item, _)| item);
        *slot = items;
    }

    // Accumulate, per item pair, the cosine pieces restricted to common users.
    #[derive(Default, Clone, Copy)]
    struct Acc {
        dot: f64,
        norm_a: f64,
        norm_b: f64,
        n: usize,
    }
    let mut pairs: HashMap<(usize, usize), Acc> = HashMap::new();
    for items in &per_user {
        for (pos, &(a, ra)) in items.iter().enumerate() {
            for &(b, rb) in &items[pos + 1..] {
                let acc = pairs.entry((a, b)).or_default();
                acc.dot += ra * rb;
                acc.norm_a += ra * ra;
                acc.norm_b += rb * rb;
                acc.n += 1;
            }
        }
    }

    let weights: HashMap<(usize, usize), f64> = pairs
        .into_iter()
        .filter_map(|(key, acc)| {
            let denom = (acc.norm_a * acc.norm_b).sqrt();
            if denom == 0.0 {
                return None;
            }
            let w = (acc.dot / denom) * (acc.n as f64 / (acc.n as f64 + shrinkage));
            (w.is_finite() && w > 0.0).then_some((key, w))
        })
        .collect();
    ImplicitEdges::from_pairs(ImplicitKind::ItemItem, ds.n_items, weights, top_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;

    fn ds(rows: &[(usize, usize, f64, i64)]) -> Dataset {
        let interactions: Vec<Interaction> = rows
            .iter()
            .map(|&(user, item, rating, timestamp)| Interaction { user, item, rating, timestamp })
            .collect();
        let n_users = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let n_items = rows.iter().map(|r| r.1).max().unwrap() + 1;
        Dataset::from_parts(interactions, n_users, n_items).unwrap()
    }

    /// Users 0 and 1 are each followed by users 2 and 3 (who arrive later on
    /// the shared items), so they share two followers.
    fn two_follower_fixture() -> Dataset {
        ds(&[
            (0, 0, 1.0, 0),  // user 0 reaches item 0 first
            (1, 1, 1.0, 0),  // user 1 reaches item 1 first
            (2, 0, 1.0, 5),  // user 2 follows 0 ...
            (2, 1, 1.0, 6),  // ... and 1
            (3, 0, 1.0, 7),  // user 3 follows 0 ...
            (3, 1, 1.0, 8),  // ... and 1
        ])
    }

    #[test]
    fn common_followers_meet_the_cutoff() {
        let edges = implicit_user_relations(&two_follower_fixture(), 2, 10);
        assert_eq!(edges.neighbors(0), &[(1, 2.0)]);
        assert_eq!(edges.neighbors(1), &[(0, 2.0)]);
        assert!(edges.neighbors(2).is_empty());
    }

    #[test]
    fn raising_tau_removes_the_edge() {
        let edges = implicit_user_relations(&two_follower_fixture(), 3, 10);
        assert_eq!(edges.edge_count(), 0);
    }

    #[test]
    fn tau_is_monotone() {
        // Random-ish co-interaction pattern; every edge at tau must persist
        // at tau - 1.
        let rows: Vec<(usize, usize, f64, i64)> = (0..60)
            .map(|k| ((k * 7) % 8, (k * 5) % 6, 1.0, (k * 13 % 31) as i64))
            .collect();
        let data = ds(&rows);
        for tau in 2..5 {
            let lo = implicit_user_relations(&data, tau - 1, 100);
            let hi = implicit_user_relations(&data, tau, 100);
            let lo_set: std::collections::HashSet<(usize, usize)> =
                lo.iter().map(|(a, b, _)| (a, b)).collect();
            for (a, b, _) in hi.iter() {
                assert!(lo_set.contains(&(a, b)), "edge ({a},{b}) vanished when tau dropped");
            }
        }
    }

    #[test]
    fn equal_timestamps_do_not_follow() {
        let data = ds(&[(0, 0, 1.0, 5), (1, 0, 1.0, 5)]);
        let edges = implicit_user_relations(&data, 1, 10);
        assert_eq!(edges.edge_count(), 0);
    }

    #[test]
    fn shrunk_cosine_matches_hand_value() {
        // Items 0 and 1 share users 0 and 1, ratings all 1.0: cosine = 1,
        // shrink 2/(2+5) → weight 2/7.
        let data = ds(&[
            (0, 0, 1.0, 0),
            (0, 1, 1.0, 1),
            (1, 0, 1.0, 2),
            (1, 1, 1.0, 3),
        ]);
        let edges = implicit_item_relations(&data, 10, 5.0);
        let w = edges.neighbors(0)[0].1;
        assert!((w - 2.0 / 7.0).abs() < 1e-12, "got {w}");
        assert_eq!(edges.neighbors(1)[0].0, 0);
    }

    #[test]
    fn no_common_users_no_edge() {
        let data = ds(&[(0, 0, 1.0, 0), (1, 1, 1.0, 1)]);
        let edges = implicit_item_relations(&data, 10, 5.0);
        assert_eq!(edges.edge_count(), 0);
    }

    #[test]
    fn top_m_keeps_heaviest_edges() {
        // Item 0 overlaps item 1 with three common users, item 2 with one.
        let data = ds(&[
            (0, 0, 1.0, 0),
            (0, 1, 1.0, 1),
            (1, 0, 1.0, 2),
            (1, 1, 1.0, 3),
            (2, 0, 1.0, 4),
            (2, 1, 1.0, 5),
            (3, 0, 1.0, 6),
            (3, 2, 1.0, 7),
        ])
        ;
        let edges = implicit_item_relations(&data, 1, 5.0);
        assert_eq!(edges.neighbors(0).len(), 1);
        assert_eq!(edges.neighbors(0)[0].0, 1, "the three-user overlap outweighs the single-user one");
    }

    #[test]
    fn weights_are_positive_and_finite() {
        let rows: Vec<(usize, usize, f64, i64)> = (0..80)
            .map(|k| ((k * 3) % 10, (k * 11) % 7, ((k % 5) as f64) - 2.0, k as i64))
            .collect();
        let data = ds(&rows);
        for (_, _, w) in implicit_item_relations(&data, 20, 5.0).iter() {
            assert!(w.is_finite() && w > 0.0);
        }
        for (_, _, w) in implicit_user_relations(&data, 2, 20).iter() {
            assert!(w.is_finite() && w > 0.0);
        }
    }
}
