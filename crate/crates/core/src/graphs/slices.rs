//! Time-sliced bipartite graphs and chronological event indices.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graphs::EntityRef;

/// One directed adjacency entry inside a slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePayload {
    pub neighbor: usize,
    pub timestamp: i64,
    pub rating: f64,
}

#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<usize>,
    edges: Vec<EdgePayload>,
}

impl Csr {
    fn build(n: usize, mut entries: Vec<(usize, EdgePayload)>) -> Csr {
        // Sort by source, then timestamp, then neighbor for a canonical order.
        entries.sort_by(|a, b| {
            (a.0, a.1.timestamp, a.1.neighbor)
                .partial_cmp(&(b.0, b.1.timestamp, b.1.neighbor))
                .expect("finite keys")
        });
        let mut offsets = vec![0usize; n + 1];
        for (src, _) in &entries {
            offsets[src + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let edges = entries.into_iter().map(|(_, e)| e).collect();
        Csr { offsets, edges }
    }

    fn row(&self, i: usize) -> &[EdgePayload] {
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// The bipartite interaction graph restricted to one half-open time window.
///
/// The two adjacencies are transposes of each other; neighbor lists are
/// sorted by timestamp.
#[derive(Debug, Clone)]
pub struct BipartiteSlice {
    pub start: i64,
    /// Exclusive end of the window.
    pub end: i64,
    user_adj: Csr,
    item_adj: Csr,
}

impl BipartiteSlice {
    pub fn user_edges(&self, user: usize) -> &[EdgePayload] {
        self.user_adj.row(user)
    }

    pub fn item_edges(&self, item: usize) -> &[EdgePayload] {
        self.item_adj.row(item)
    }

    pub fn edge_count(&self) -> usize {
        self.user_adj.edges.len()
    }
}

/// The training window cut into equal-length half-open slices.
#[derive(Debug, Clone)]
pub struct TimeSlicedGraph {
    pub slices: Vec<BipartiteSlice>,
    pub min_ts: i64,
    pub slice_length: i64,
    pub n_users: usize,
    pub n_items: usize,
}

impl TimeSlicedGraph {
    /// A graph with no slices at all (empty public structure).
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        TimeSlicedGraph { slices: Vec::new(), min_ts: 0, slice_length: 1, n_users, n_items }
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    /// The slice whose window contains `t`, clamped to the covered range.
    /// Returns `None` only when there are no slices.
    pub fn slice_for(&self, t: i64) -> Option<&BipartiteSlice> {
        if self.slices.is_empty() {
            return None;
        }
        let raw = (t - self.min_ts).div_euclid(self.slice_length);
        let idx = raw.clamp(0, self.slices.len() as i64 - 1) as usize;
        Some(&self.slices[idx])
    }
}

/// Cuts `train` into slices of `slice_length` seconds, starting at the
/// earliest timestamp. An interaction at exactly a boundary belongs to the
/// later slice (windows are `[start, start + slice_length)`).
pub fn build_time_slices(train: &Dataset, slice_length: i64) -> Result<TimeSlicedGraph> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(" (cannot slice an empty training set)".into()));
    }
    if slice_length <= 0 {
        return Err(Error::Config("slice length must be positive".into()));
    }
    let min_ts = train.interactions.iter().map(|i| i.timestamp).min().unwrap();
    let max_ts = train.interactions.iter().map(|i| i.timestamp).max().unwrap();
    let n_slices = ((max_ts - min_ts) / slice_length + 1) as usize;

    let mut per_slice: Vec<Vec<(usize, EdgePayload)>> = vec![Vec::new(); n_slices];
    let mut per_slice_t: Vec<Vec<(usize, EdgePayload)>> = vec![Vec::new(); n_slices];
    for it in &train.interactions {
        let s = ((it.timestamp - min_ts) / slice_length) as usize;
        per_slice[s].push((it.user, EdgePayload { neighbor: it.item, timestamp: it.timestamp, rating: it.rating }));
        per_slice_t[s].push((it.item, EdgePayload { neighbor: it.user, timestamp: it.timestamp, rating: it.rating }));
    }

    let slices = per_slice
        .into_iter()
        .zip(per_slice_t)
        .enumerate()
        .map(|(i, (fwd, bwd))| BipartiteSlice {
            start: min_ts + i as i64 * slice_length,
            end: min_ts + (i as i64 + 1) * slice_length,
            user_adj: Csr::build(train.n_users, fwd),
            item_adj: Csr::build(train.n_items, bwd),
        })
        .collect();

    Ok(TimeSlicedGraph { slices, min_ts, slice_length, n_users: train.n_users, n_items: train.n_items })
}

/// One event in an entity's chronological record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// The counterpart entity (item for user sequences, user for item ones).
    pub counterpart: usize,
    pub timestamp: i64,
    pub rating: f64,
}

/// Per-entity chronological event lists, for behavior-sequence lookups.
#[derive(Debug, Clone, Default)]
pub struct EventIndex {
    user_events: Vec<Vec<Event>>,
    item_events: Vec<Vec<Event>>,
}

impl EventIndex {
    pub fn build(ds: &Dataset) -> EventIndex {
        let mut user_events = vec![Vec::new(); ds.n_users];
        let mut item_events = vec![Vec::new(); ds.n_items];
        // Dataset order is (user, timestamp, item): user lists come out
        // chronological for free; item lists need their own sort.
        for it in &ds.interactions {
            user_events[it.user].push(Event { counterpart: it.item, timestamp: it.timestamp, rating: it.rating });
            item_events[it.item].push(Event { counterpart: it.user, timestamp: it.timestamp, rating: it.rating });
        }
        for list in &mut item_events {
            list.sort_by_key(|e| (e.timestamp, e.counterpart));
        }
        EventIndex { user_events, item_events }
    }

    pub fn events_of(&self, entity: EntityRef) -> &[Event] {
        match entity {
            EntityRef::User(u) => &self.user_events[u],
            EntityRef::Item(i) => &self.item_events[i],
        }
    }
}

/// The trailing window of an entity's history.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSequence {
    pub owner: EntityRef,
    /// Up to `max_len` most recent events strictly before the query time,
    /// oldest first.
    pub events: Vec<Event>,
}

/// Extracts the `max_len` most recent events of `entity` with
/// `timestamp < t`, oldest first.
pub fn behavior_sequence(index: &EventIndex, entity: EntityRef, t: i64, max_len: usize) -> BehaviorSequence {
    let all = index.events_of(entity);
    let cut = all.partition_point(|e| e.timestamp < t);
    let lo = cut.saturating_sub(max_len);
    BehaviorSequence { owner: entity, events: all[lo..cut].to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;

    fn ds(rows: &[(usize, usize, i64)]) -> Dataset {
        let interactions: Vec<Interaction> = rows
            .iter()
            .map(|&(user, item, timestamp)| Interaction { user, item, rating: 1.0, timestamp })
            .collect();
        let n_users = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let n_items = rows.iter().map(|r| r.1).max().unwrap() + 1;
        Dataset::from_parts(interactions, n_users, n_items).unwrap()
    }

    #[test]
    fn splits_range_into_half_open_windows() {
        let rows: Vec<(usize, usize, i64)> = (0..100).map(|t| (t % 3, t % 5, t as i64)).collect();
        let g = build_time_slices(&ds(&rows), 50).unwrap();
        assert_eq!(g.n_slices(), 2);
        assert_eq!(g.slices[0].start, 0);
        assert_eq!(g.slices[0].end, 50);
        assert_eq!(g.slices[1].start, 50);
        // The boundary event at t = 50 lands in the second slice.
        let total0 = g.slices[0].edge_count();
        let total1 = g.slices[1].edge_count();
        assert_eq!(total0, 50);
        assert_eq!(total1, 50);
        let second = g.slice_for(50).unwrap();
        assert_eq!(second.start, 50);
    }

    #[test]
    fn single_slice_when_length_exceeds_range() {
        let g = build_time_slices(&ds(&[(0, 0, 10), (0, 1, 20)]), 1000).unwrap();
        assert_eq!(g.n_slices(), 1);
        assert_eq!(g.slice_for(10_000).unwrap().start, 10);
        assert_eq!(g.slice_for(-5).unwrap().start, 10);
    }

    #[test]
    fn adjacencies_are_transposes() {
        let rows = [(0, 1, 5), (0, 2, 3), (1, 1, 4), (2, 0, 9)];
        let g = build_time_slices(&ds(&rows), 100).unwrap();
        let s = &g.slices[0];
        let mut fwd: Vec<(usize, usize, i64)> = Vec::new();
        for u in 0..3 {
            for e in s.user_edges(u) {
                fwd.push((u, e.neighbor, e.timestamp));
            }
        }
        let mut bwd: Vec<(usize, usize, i64)> = Vec::new();
        for i in 0..3 {
            for e in s.item_edges(i) {
                bwd.push((e.neighbor, i, e.timestamp));
            }
        }
        fwd.sort_unstable();
        bwd.sort_unstable();
        assert_eq!(fwd, bwd);
        // Neighbor lists sorted by timestamp.
        let ts: Vec<i64> = s.user_edges(0).iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![3, 5]);
    }

    #[test]
    fn rejects_empty_or_bad_input() {
        let empty = Dataset::from_parts(Vec::new(), 2, 2).unwrap();
        assert!(build_time_slices(&empty, 10).is_err());
        assert!(build_time_slices(&ds(&[(0, 0, 1)]), 0).is_err());
    }

    #[test]
    fn behavior_sequence_is_recent_events_oldest_first() {
        let rows = [(0, 10, 1), (0, 11, 5), (0, 12, 9), (0, 13, 12)];
        let idx = EventIndex::build(&ds(&rows));
        let seq = behavior_sequence(&idx, EntityRef::User(0), 10, 2);
        let items: Vec<usize> = seq.events.iter().map(|e| e.counterpart).collect();
        assert_eq!(items, vec![11, 12]);

        // Strictly before t: the event at t = 9 is excluded when t = 9.
        let seq = behavior_sequence(&idx, EntityRef::User(0), 9, 10);
        let items: Vec<usize> = seq.events.iter().map(|e| e.counterpart).collect();
        assert_eq!(items, vec![10, 11]);

        // Cold start: nothing before the first event.
        let seq = behavior_sequence(&idx, EntityRef::User(0), 1, 10);
        assert!(seq.events.is_empty());
    }

    #[test]
    fn item_sequences_mirror_user_sequences() {
        let rows = [(0, 7, 3), (1, 7, 1), (2, 7, 8)];
        let idx = EventIndex::build(&ds(&rows));
        let seq = behavior_sequence(&idx, EntityRef::Item(7), 100, 10);
        let users: Vec<usize> = seq.events.iter().map(|e| e.counterpart).collect();
        assert_eq!(users, vec![1, 0, 2]);
    }
}
