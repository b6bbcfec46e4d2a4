//! Graph machinery: time-sliced interaction graphs, behavior sequences,
//! implicit user/item relations, meta-path neighborhoods, and seeded k-hop
//! subgraph sampling with DropNode augmentation.

mod implicit;
mod metapath;
mod sample;
mod slices;

pub use implicit::{implicit_item_relations, implicit_user_relations, ImplicitEdges, ImplicitKind};
pub use metapath::{metapath_neighbors, MetaPath, MetaPathSet};
pub use sample::{drop_node, sample_khop, time_bucket, EdgeKind, SampleFlags, SubEdge, Subgraph, TIME_BUCKETS};
pub use slices::{
    behavior_sequence, build_time_slices, BehaviorSequence, BipartiteSlice, EdgePayload, Event,
    EventIndex, TimeSlicedGraph,
};

use crate::dataset::Dataset;
use crate::error::Result;

/// A node in the bipartite universe: either side keeps its dense index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    User(usize),
    Item(usize),
}

impl EntityRef {
    pub fn index(&self) -> usize {
        match *self {
            EntityRef::User(i) | EntityRef::Item(i) => i,
        }
    }

    pub fn is_user(&self) -> bool {
        matches!(self, EntityRef::User(_))
    }
}

/// Tunables for graph construction and sampling.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Number of time slices the training range is cut into.
    pub n_slices: usize,
    /// Explicit slice length in seconds; overrides `n_slices` when set.
    pub slice_length: Option<i64>,
    /// Common-follower cutoff for implicit user edges.
    pub tau: usize,
    /// Per-source cap on implicit edges.
    pub top_m: usize,
    /// Shrinkage constant for the item-similarity weight.
    pub shrinkage: f64,
    /// Sampling depth (hops) for subgraphs.
    pub depth: usize,
    /// Per-node neighbor cap during sampling.
    pub fanout: usize,
    /// Maximum behavior-sequence length.
    pub seq_len: usize,
    /// DropNode probability applied to training subgraphs.
    pub drop_node_rate: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            n_slices: 8,
            slice_length: None,
            tau: 2,
            top_m: 20,
            shrinkage: 5.0,
            depth: 2,
            fanout: 8,
            seq_len: 10,
            drop_node_rate: 0.25,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.n_slices == 0 {
            return Err(Error::Config("n_slices must be ≥ 1".into()));
        }
        if let Some(l) = self.slice_length {
            if l <= 0 {
                return Err(Error::Config("slice_length must be positive".into()));
            }
        }
        if self.depth == 0 {
            return Err(Error::Config("sampling depth must be ≥ 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_node_rate) {
            return Err(Error::Config("drop_node_rate must lie in [0, 1]".into()));
        }
        if self.shrinkage < 0.0 || !self.shrinkage.is_finite() {
            return Err(Error::Config("shrinkage must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Which relation families participate in graph construction and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphFlags {
    pub implicit_user: bool,
    pub implicit_item: bool,
    /// When false, expansions from item nodes may not bring in users other
    /// than the subgraph root: other users' interactions stay invisible.
    pub neighbor_public: bool,
}

impl Default for GraphFlags {
    fn default() -> Self {
        GraphFlags { implicit_user: true, implicit_item: true, neighbor_public: true }
    }
}

/// Everything the model needs to look around an entity: sliced structure,
/// implicit relations, and the event index behavior sequences are read from.
///
/// `structure` (slices + implicit edges) is built from publicly shareable
/// interactions; `events` may come from a richer, locally held set.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub slices: TimeSlicedGraph,
    pub implicit_users: ImplicitEdges,
    pub implicit_items: ImplicitEdges,
    pub events: EventIndex,
    pub flags: GraphFlags,
    pub cfg: GraphConfig,
}

impl GraphContext {
    /// Builds a context. `structure` feeds the slices and implicit relations;
    /// `events` feeds behavior sequences. Either may be empty.
    pub fn build(structure: &Dataset, events: &Dataset, cfg: &GraphConfig, flags: GraphFlags) -> Result<Self> {
        cfg.validate()?;
        let slices = if structure.is_empty() {
            TimeSlicedGraph::empty(structure.n_users, structure.n_items)
        } else {
            let range = structure.interactions.iter().map(|i| i.timestamp);
            let min = range.clone().min().unwrap();
            let max = structure.interactions.iter().map(|i| i.timestamp).max().unwrap();
            let slice_length = cfg
                .slice_length
                .unwrap_or_else(|| ((max - min + 1) + cfg.n_slices as i64 - 1) / cfg.n_slices as i64)
                .max(1);
            build_time_slices(structure, slice_length)?
        };
        let implicit_users = if flags.implicit_user {
            implicit_user_relations(structure, cfg.tau, cfg.top_m)
        } else {
            ImplicitEdges::empty(ImplicitKind::UserUser, structure.n_users)
        };
        let implicit_items = if flags.implicit_item {
            implicit_item_relations(structure, cfg.top_m, cfg.shrinkage)
        } else {
            ImplicitEdges::empty(ImplicitKind::ItemItem, structure.n_items)
        };
        let events = EventIndex::build(events);
        Ok(GraphContext { slices, implicit_users, implicit_items, events, flags, cfg: *cfg })
    }

    pub fn sample_flags(&self) -> SampleFlags {
        SampleFlags {
            implicit_user: self.flags.implicit_user,
            implicit_item: self.flags.implicit_item,
            neighbor_public: self.flags.neighbor_public,
        }
    }

    /// Samples a k-hop subgraph around `root` as seen at time `t`.
    pub fn sample(&self, root: EntityRef, t: i64, seed: u64) -> Subgraph {
        sample_khop(
            &self.slices,
            &self.implicit_users,
            &self.implicit_items,
            root,
            t,
            self.cfg.depth,
            self.cfg.fanout,
            &self.sample_flags(),
            seed,
        )
    }

    /// The behavior sequence of `entity` strictly before `t`.
    pub fn sequence(&self, entity: EntityRef, t: i64) -> BehaviorSequence {
        behavior_sequence(&self.events, entity, t, self.cfg.seq_len)
    }
}
