//! Meta-path neighbor sets.
//!
//! For a user: direct items, explicit social neighbors, implicit user
//! neighbors, and the items reachable through either kind of user neighbor.
//! For an item: direct users, implicit item neighbors, and the users
//! reachable through them. Sets are deduplicated in discovery order and
//! capped at the fanout; two-hop walks also cap their intermediate frontier
//! so the work stays bounded.
//!
//! Explicit social edges are not ingested from any dataset; the parameter
//! exists so callers holding side-channel social data can still query the
//! social paths, and it is empty everywhere in the shipped pipeline.

use crate::graphs::{EntityRef, EventIndex, ImplicitEdges};

/// Identifies one of the supported walk shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaPath {
    UserItem,
    UserUser,
    UserImplicitUser,
    UserUserItem,
    UserImplicitUserItem,
    ItemUser,
    ItemImplicitItem,
    ItemImplicitItemUser,
}

/// One path's neighbor set for a queried entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathSet {
    pub path: MetaPath,
    pub neighbors: Vec<usize>,
}

fn dedup_cap(mut seen: Vec<usize>, fanout: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut present = std::collections::HashSet::new();
    for v in seen.drain(..) {
        if present.insert(v) {
            out.push(v);
            if out.len() == fanout {
                break;
            }
        }
    }
    out
}

fn direct_counterparts(events: &EventIndex, entity: EntityRef, fanout: usize) -> Vec<usize> {
    dedup_cap(events.events_of(entity).iter().map(|e| e.counterpart).collect(), fanout)
}

fn social_neighbors(social: &[(usize, usize)], u: usize, fanout: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &(a, b) in social {
        if a == u {
            out.push(b);
        } else if b == u {
            out.push(a);
        }
    }
    dedup_cap(out, fanout)
}

fn implicit_neighbors(edges: &ImplicitEdges, src: usize, fanout: usize) -> Vec<usize> {
    dedup_cap(edges.neighbors(src).iter().map(|&(dst, _)| dst).collect(), fanout)
}

fn second_hop(events: &EventIndex, first: &[usize], via_user: bool, fanout: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &mid in first {
        let entity = if via_user { EntityRef::User(mid) } else { EntityRef::Item(mid) };
        out.extend(events.events_of(entity).iter().map(|e| e.counterpart));
    }
    dedup_cap(out, fanout)
}

/// Computes every meta-path neighbor set rooted at `entity`.
pub fn metapath_neighbors(
    events: &EventIndex,
    implicit_users: &ImplicitEdges,
    implicit_items: &ImplicitEdges,
    social: &[(usize, usize)],
    entity: EntityRef,
    fanout: usize,
) -> Vec<MetaPathSet> {
    match entity {
        EntityRef::User(u) => {
            let social_1 = social_neighbors(social, u, fanout);
            let implicit_1 = implicit_neighbors(implicit_users, u, fanout);
            vec![
                MetaPathSet { path: MetaPath::UserItem, neighbors: direct_counterparts(events, entity, fanout) },
                MetaPathSet { path: MetaPath::UserUser, neighbors: social_1.clone() },
                MetaPathSet { path: MetaPath::UserImplicitUser, neighbors: implicit_1.clone() },
                MetaPathSet {
                    path: MetaPath::UserUserItem,
                    neighbors: second_hop(events, &social_1, true, fanout),
                },
                MetaPathSet {
                    path: MetaPath::UserImplicitUserItem,
                    neighbors: second_hop(events, &implicit_1, true, fanout),
                },
            ]
        }
        EntityRef::Item(i) => {
            let implicit_1 = implicit_neighbors(implicit_items, i, fanout);
            vec![
                MetaPathSet { path: MetaPath::ItemUser, neighbors: direct_counterparts(events, entity, fanout) },
                MetaPathSet { path: MetaPath::ItemImplicitItem, neighbors: implicit_1.clone() },
                MetaPathSet {
                    path: MetaPath::ItemImplicitItemUser,
                    neighbors: second_hop(events, &implicit_1, false, fanout),
                },
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Interaction};
    use crate::graphs::ImplicitKind;

    fn events(rows: &[(usize, usize, i64)]) -> EventIndex {
        let interactions: Vec<Interaction> = rows
            .iter()
            .map(|&(user, item, timestamp)| Interaction { user, item, rating: 1.0, timestamp })
            .collect();
        let n_users = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let n_items = rows.iter().map(|r| r.1).max().unwrap() + 1;
        EventIndex::build(&Dataset::from_parts(interactions, n_users, n_items).unwrap())
    }

    fn set(sets: &[MetaPathSet], path: MetaPath) -> &[usize] {
        &sets.iter().find(|s| s.path == path).unwrap().neighbors
    }

    #[test]
    fn two_hop_social_walk_reaches_items() {
        // Chain: u0 –(social)– u1, u1 interacted with i0.
        let ev = events(&[(1, 0, 5), (0, 1, 3)]);
        let empty_u = ImplicitEdges::empty(ImplicitKind::UserUser, 2);
        let empty_i = ImplicitEdges::empty(ImplicitKind::ItemItem, 2);
        let sets = metapath_neighbors(&ev, &empty_u, &empty_i, &[(0, 1)], EntityRef::User(0), 8);
        assert_eq!(set(&sets, MetaPath::UserUser), &[1]);
        assert_eq!(set(&sets, MetaPath::UserUserItem), &[0]);
        assert_eq!(set(&sets, MetaPath::UserItem), &[1]);
        assert!(set(&sets, MetaPath::UserImplicitUser).is_empty());
    }

    #[test]
    fn sets_are_deduplicated_and_capped() {
        let rows: Vec<(usize, usize, i64)> = (0..20).map(|k| (0, k % 4, k as i64)).collect();
        let ev = events(&rows);
        let empty_u = ImplicitEdges::empty(ImplicitKind::UserUser, 1);
        let empty_i = ImplicitEdges::empty(ImplicitKind::ItemItem, 4);
        let sets = metapath_neighbors(&ev, &empty_u, &empty_i, &[], EntityRef::User(0), 3);
        let direct = set(&sets, MetaPath::UserItem);
        assert_eq!(direct.len(), 3);
        let unique: std::collections::HashSet<_> = direct.iter().collect();
        assert_eq!(unique.len(), 3);
    }

    #[test]
    fn item_paths_walk_implicit_edges() {
        // Items 0 and 1 share users 0 and 1, producing an implicit edge;
        // the event index only knows u0–i0 and u1–i1, so the two-hop walk
        // from item 0 reaches user 1 through the implicit edge.
        let ev = events(&[(0, 0, 1), (1, 1, 2)]);
        let empty_u = ImplicitEdges::empty(ImplicitKind::UserUser, 2);
        let data: Vec<Interaction> = vec![
            Interaction { user: 0, item: 0, rating: 1.0, timestamp: 0 },
            Interaction { user: 0, item: 1, rating: 1.0, timestamp: 1 },
            Interaction { user: 1, item: 0, rating: 1.0, timestamp: 2 },
            Interaction { user: 1, item: 1, rating: 1.0, timestamp: 3 },
        ];
        let ds = Dataset::from_parts(data, 2, 2).unwrap();
        let ii = crate::graphs::implicit_item_relations(&ds, 4, 5.0);
        let sets = metapath_neighbors(&ev, &empty_u, &ii, &[], EntityRef::Item(0), 8);
        assert_eq!(set(&sets, MetaPath::ItemImplicitItem), &[1]);
        assert_eq!(set(&sets, MetaPath::ItemImplicitItemUser), &[1]);
        assert_eq!(set(&sets, MetaPath::ItemUser), &[0]);
    }
}
