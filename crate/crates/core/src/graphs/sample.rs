//! Seeded k-hop subgraph sampling and DropNode augmentation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graphs::{EntityRef, ImplicitEdges, TimeSlicedGraph};
use crate::seed::{self, domain};

/// Number of log2 time-delta buckets.
pub const TIME_BUCKETS: usize = 16;

/// Maps a time delta (seconds) to its log2 bucket, clamped to 0..=15.
///
/// Deltas of at most one second land in bucket 0; bucket `b` covers
/// `[2^b, 2^(b+1))` seconds; everything from `2^15` up shares bucket 15.
pub fn time_bucket(delta: i64) -> usize {
    if delta <= 1 {
        return 0;
    }
    (63 - (delta as u64).leading_zeros() as usize).min(TIME_BUCKETS - 1)
}

/// Edge provenance inside a sampled subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// A user-item interaction from the time slice.
    Interaction = 0,
    /// An implicit user-user edge.
    UserUser = 1,
    /// An implicit item-item edge.
    ItemItem = 2,
}

/// An edge between two sampled nodes, carrying its embedded features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubEdge {
    /// Index (into `Subgraph::nodes`) of the node discovered first.
    pub parent: usize,
    /// Index of the node the edge discovered.
    pub child: usize,
    /// log2 bucket of `t_ref - edge timestamp` (0 for implicit edges).
    pub bucket: usize,
    pub kind: EdgeKind,
}

/// A sampled neighborhood rooted at one entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// `nodes[0]` is always the root.
    pub nodes: Vec<EntityRef>,
    /// Node indices per hop; `layers[0] == [0]`.
    pub layers: Vec<Vec<usize>>,
    /// Discovery edges; every child is adjacent to a previous-hop parent.
    pub edges: Vec<SubEdge>,
    /// True when the root had no presence in the queried slice.
    pub cold: bool,
}

impl Subgraph {
    fn root_only(root: EntityRef, cold: bool) -> Subgraph {
        Subgraph { nodes: vec![root], layers: vec![vec![0]], edges: Vec::new(), cold }
    }

    pub fn root(&self) -> EntityRef {
        self.nodes[0]
    }

    /// Node indices at graph distance exactly `hop` from `node`, walking the
    /// sampled edges as an undirected graph.
    pub fn nodes_at_distance(&self, node: usize, hop: usize) -> Vec<usize> {
        let n = self.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.parent].push(e.child);
            adj[e.child].push(e.parent);
        }
        let mut dist = vec![usize::MAX; n];
        dist[node] = 0;
        let mut frontier = vec![node];
        let mut d = 0;
        while !frontier.is_empty() && d < hop {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = d + 1;
                        next.push(w);
                    }
                }
            }
            frontier = next;
            d += 1;
        }
        frontier
    }
}

/// Which relation families the sampler may traverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleFlags {
    pub implicit_user: bool,
    pub implicit_item: bool,
    /// When false, item nodes only expand back to the root user: no other
    /// user's interactions enter the subgraph.
    pub neighbor_public: bool,
}

impl Default for SampleFlags {
    fn default() -> Self {
        SampleFlags { implicit_user: true, implicit_item: true, neighbor_public: true }
    }
}

/// Samples a breadth-first k-hop subgraph around `root` from the slice
/// containing `t_ref`, traversing the union of bipartite and implicit edges.
///
/// At each node at most `fanout` unvisited neighbors are kept: all of them
/// (in canonical order) when they fit, otherwise a seeded uniform draw
/// without replacement. A root with no presence in the slice yields a
/// root-only subgraph flagged cold.
#[allow(clippy::too_many_arguments)]
pub fn sample_khop(
    slices: &TimeSlicedGraph,
    implicit_users: &ImplicitEdges,
    implicit_items: &ImplicitEdges,
    root: EntityRef,
    t_ref: i64,
    depth: usize,
    fanout: usize,
    flags: &SampleFlags,
    seed: u64,
) -> Subgraph {
    let slice = match slices.slice_for(t_ref) {
        Some(s) => s,
        None => return Subgraph::root_only(root, true),
    };
    let root_degree = match root {
        EntityRef::User(u) => slice.user_edges(u).len(),
        EntityRef::Item(i) => slice.item_edges(i).len(),
    };
    if root_degree == 0 {
        return Subgraph::root_only(root, true);
    }

    let mut rng = seed::seeded_rng(seed, &[domain::SUBGRAPH]);
    let mut nodes = vec![root];
    let mut layers = vec![vec![0usize]];
    let mut edges: Vec<SubEdge> = Vec::new();
    let mut visited: std::collections::HashMap<EntityRef, usize> = std::collections::HashMap::new();
    visited.insert(root, 0);

    let mut frontier = vec![0usize];
    for _hop in 1..=depth {
        let mut next = Vec::new();
        for &parent in &frontier {
            let mut candidates: Vec<(EntityRef, EdgeKind, usize)> = Vec::new();
            match nodes[parent] {
                EntityRef::User(u) => {
                    for e in slice.user_edges(u) {
                        candidates.push((
                            EntityRef::Item(e.neighbor),
                            EdgeKind::Interaction,
                            time_bucket((t_ref - e.timestamp).max(0)),
                        ));
                    }
                    if flags.implicit_user {
                        for &(v, _) in implicit_users.neighbors(u) {
                            candidates.push((EntityRef::User(v), EdgeKind::UserUser, 0));
                        }
                    }
                }
                EntityRef::Item(i) => {
                    for e in slice.item_edges(i) {
                        let user_ok = flags.neighbor_public || root == EntityRef::User(e.neighbor);
                        if user_ok {
                            candidates.push((
                                EntityRef::User(e.neighbor),
                                EdgeKind::Interaction,
                                time_bucket((t_ref - e.timestamp).max(0)),
                            ));
                        }
                    }
                    if flags.implicit_item {
                        for &(j, _) in implicit_items.neighbors(i) {
                            candidates.push((EntityRef::Item(j), EdgeKind::ItemItem, 0));
                        }
                    }
                }
            }
            candidates.retain(|(e, _, _)| !visited.contains_key(e));
            // Repeat interactions can list an unvisited entity twice; keep
            // the first (most recent-bucket ordering is canonical already).
            let mut seen_here = std::collections::HashSet::new();
            candidates.retain(|(e, _, _)| seen_here.insert(*e));

            let chosen: Vec<(EntityRef, EdgeKind, usize)> = if candidates.len() <= fanout {
                candidates
            } else {
                let (picked, _) = candidates.partial_shuffle(&mut rng, fanout);
                picked.to_vec()
            };
            for (entity, kind, bucket) in chosen {
                let idx = nodes.len();
                nodes.push(entity);
                visited.insert(entity, idx);
                edges.push(SubEdge { parent, child: idx, bucket, kind });
                next.push(idx);
            }
        }
        if next.is_empty() {
            break;
        }
        layers.push(next.clone());
        frontier = next;
    }

    Subgraph { nodes, layers, edges, cold: false }
}

/// DropNode: removes each non-root node independently with probability
/// `rate`, then prunes everything no longer connected to the root.
pub fn drop_node(sub: &Subgraph, rate: f64, seed: u64) -> Subgraph {
    if rate <= 0.0 || sub.nodes.len() == 1 {
        return sub.clone();
    }
    let mut rng = seed::seeded_rng(seed, &[domain::DROP_NODE]);
    let mut kept = vec![true; sub.nodes.len()];
    for k in kept.iter_mut().skip(1) {
        if rng.gen::<f64>() < rate {
            *k = false;
        }
    }

    // Discovery edges form a tree rooted at 0 with parents recorded before
    // children, so one forward pass settles reachability.
    let mut reachable = vec![false; sub.nodes.len()];
    reachable[0] = true;
    for e in &sub.edges {
        if kept[e.child] && reachable[e.parent] {
            reachable[e.child] = true;
        }
    }

    let mut remap = vec![usize::MAX; sub.nodes.len()];
    let mut nodes = Vec::new();
    for (i, &node) in sub.nodes.iter().enumerate() {
        if reachable[i] {
            remap[i] = nodes.len();
            nodes.push(node);
        }
    }
    let edges: Vec<SubEdge> = sub
        .edges
        .iter()
        .filter(|e| reachable[e.parent] && reachable[e.child])
        .map(|e| SubEdge { parent: remap[e.parent], child: remap[e.child], ..*e })
        .collect();
    let layers: Vec<Vec<usize>> = sub
        .layers
        .iter()
        .map(|layer| layer.iter().filter(|&&i| reachable[i]).map(|&i| remap[i]).collect::<Vec<_>>())
        .take_while(|layer: &Vec<usize>| !layer.is_empty())
        .collect();

    Subgraph { nodes, layers, edges, cold: sub.cold }
}
