//! The forward network: temporal sequence embeddings, multi-head attention
//! message passing over sampled subgraphs, hop/layer combination, and the
//! prediction MLP — all recorded on a [`Tape`] so gradients are exact.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graphs::{time_bucket, EntityRef, GraphContext, Subgraph};
use crate::seed::{derive_seed, domain};

use super::params::{BlockRef, ModelConfig, ModelParams};
use super::tape::{NodeId, Tape};

/// Randomness knobs for one batch of predictions.
#[derive(Debug, Clone, Copy)]
pub struct SampleSettings {
    /// Sampling seed; all per-entity randomness is derived from it by content.
    pub seed: u64,
    /// Probability of dropping a non-root node from each sampled subgraph;
    /// 0 disables dropping (the evaluation setting).
    pub drop_rate: f64,
}

impl SampleSettings {
    pub fn eval(seed: u64) -> SampleSettings {
        SampleSettings { seed, drop_rate: 0.0 }
    }
}

/// An entity's two learned views at a point in time.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// Sequence-derived embedding (base-table fallback when history is empty).
    pub temporal: NodeId,
    /// Neighborhood embedding from message passing over a sampled subgraph.
    pub structural: NodeId,
}

/// One labelled prediction task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub target: f64,
}

/// Per-node hidden states produced by message passing.
///
/// `states[0]` holds the temporal initialization; `states[l]` for `l ≥ 1` the
/// result of the l-th propagation layer. Inner index follows `Subgraph::nodes`.
#[derive(Debug, Clone)]
pub struct NodeStates {
    pub states: Vec<Vec<NodeId>>,
}

impl NodeStates {
    /// The root's state per propagation layer (layer 0 excluded).
    pub fn root_layers(&self) -> Vec<NodeId> {
        self.states[1..].iter().map(|layer| layer[0]).collect()
    }
}

/// Arithmetic mean of per-layer states.
pub fn combine_layers(tape: &mut Tape, states: &[NodeId]) -> Result<NodeId> {
    if states.is_empty() {
        return Err(Error::Config("combine_layers needs at least one state".into()));
    }
    let total = tape.sum(states);
    Ok(tape.scale(total, 1.0 / states.len() as f64))
}

/// Records predictions for one (params, graph context) pair on a shared tape.
///
/// Encoded entities are cached by `(entity, time)`, so repeated appearances
/// within a batch reuse the same tape nodes.
pub struct Encoder<'a> {
    params: &'a ModelParams,
    cfg: &'a ModelConfig,
    ctx: &'a GraphContext,
    settings: SampleSettings,
    temporal_cache: HashMap<(EntityRef, i64), NodeId>,
    structural_cache: HashMap<(EntityRef, i64), NodeId>,
}

impl<'a> Encoder<'a> {
    pub fn new(
        params: &'a ModelParams,
        cfg: &'a ModelConfig,
        ctx: &'a GraphContext,
        settings: SampleSettings,
    ) -> Result<Encoder<'a>> {
        cfg.validate()?;
        if params.dim() != cfg.dim || params.heads() != cfg.heads {
            return Err(Error::Config(format!(
                "parameter shapes (d={}, H={}) do not match config (d={}, H={})",
                params.dim(),
                params.heads(),
                cfg.dim,
                cfg.heads
            )));
        }
        if !(0.0..=1.0).contains(&settings.drop_rate) {
            return Err(Error::Config("drop rate must lie in [0, 1]".into()));
        }
        Ok(Encoder {
            params,
            cfg,
            ctx,
            settings,
            temporal_cache: HashMap::new(),
            structural_cache: HashMap::new(),
        })
    }

    fn base_table(entity: EntityRef) -> BlockRef {
        if entity.is_user() { BlockRef::UserTable } else { BlockRef::ItemTable }
    }

    fn counterpart_table(entity: EntityRef) -> BlockRef {
        if entity.is_user() { BlockRef::ItemTable } else { BlockRef::UserTable }
    }

    /// One row per event strictly before `t`: counterpart embedding plus the
    /// log2 time-delta bucket embedding. Empty history → no rows.
    pub fn embed_sequence(&self, tape: &mut Tape, entity: EntityRef, t: i64) -> Vec<NodeId> {
        let seq = self.ctx.sequence(entity, t);
        seq.events
            .iter()
            .map(|ev| {
                let base = tape.param_row(self.params, Self::counterpart_table(entity), ev.counterpart);
                let bucket = time_bucket(t - ev.timestamp);
                let when = tape.param_row(self.params, BlockRef::TimeBuckets, bucket);
                tape.sum(&[base, when])
            })
            .collect()
    }

    /// The entity's time-aware embedding: the most recent sequence row, or
    /// its base-table row when it has no history before `t`.
    pub fn temporal_embedding(&mut self, tape: &mut Tape, entity: EntityRef, t: i64) -> NodeId {
        if let Some(&hit) = self.temporal_cache.get(&(entity, t)) {
            return hit;
        }
        let rows = self.embed_sequence(tape, entity, t);
        let node = match rows.last() {
            Some(&last) => last,
            None => tape.param_row(self.params, Self::base_table(entity), entity.index()),
        };
        self.temporal_cache.insert((entity, t), node);
        node
    }

    /// Multi-head attention over a node's neighbor states.
    ///
    /// Per head: scores are leaky-relu'd bilinear forms over `[Wh_self ‖ Wh_j]`,
    /// softmax-normalized, and the relu'd weighted sum of projected neighbors
    /// is taken; head outputs are concatenated and projected back to `d`.
    /// An empty neighbor list yields a zero vector. With attention disabled,
    /// the softmax weights are replaced by the uniform distribution.
    pub fn attention_aggregate(&self, tape: &mut Tape, h_self: NodeId, neighbors: &[NodeId]) -> NodeId {
        if neighbors.is_empty() {
            return tape.input(vec![0.0; self.cfg.dim]);
        }
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let w_self = tape.matvec(self.params, BlockRef::AttnW(h), h_self);
            let projected: Vec<NodeId> = neighbors
                .iter()
                .map(|&n| tape.matvec(self.params, BlockRef::AttnW(h), n))
                .collect();
            let alpha = if self.cfg.attention {
                let scores: Vec<NodeId> = projected
                    .iter()
                    .map(|&wj| {
                        let pair = tape.concat(&[w_self, wj]);
                        tape.matvec(self.params, BlockRef::AttnA(h), pair)
                    })
                    .collect();
                let packed = tape.concat(&scores);
                let bent = tape.leaky_relu(packed, self.cfg.negative_slope);
                tape.softmax(bent)
            } else {
                tape.input(vec![1.0 / projected.len() as f64; projected.len()])
            };
            let mixed = tape.weighted_sum(alpha, &projected);
            heads.push(tape.relu(mixed));
        }
        let stacked = tape.concat(&heads);
        tape.matvec(self.params, BlockRef::Combine, stacked)
    }

    /// Sum of embedded edge features over the whole subgraph; `None` when the
    /// subgraph has no edges. Added to every node's message as a shared bias.
    pub fn edge_term(&self, tape: &mut Tape, sub: &Subgraph) -> Option<NodeId> {
        if sub.edges.is_empty() {
            return None;
        }
        let rows: Vec<NodeId> = sub
            .edges
            .iter()
            .flat_map(|e| {
                [
                    tape.param_row(self.params, BlockRef::TimeBuckets, e.bucket),
                    tape.param_row(self.params, BlockRef::EdgeKinds, e.kind as usize),
                ]
            })
            .collect();
        Some(tape.sum(&rows))
    }

    /// Message passing over `sub`. Layer 0 is each node's temporal embedding
    /// at `t`; each later layer updates every node from its exact-distance-k
    /// neighborhoods (one channel per hop), then averages the channels.
    pub fn khop_forward(&mut self, tape: &mut Tape, sub: &Subgraph, t: i64) -> NodeStates {
        let n = sub.nodes.len();
        let depth = self.params.depth();
        let hood = neighbors_by_hop(sub, depth);
        let shared_edges = self.edge_term(tape, sub);

        let init: Vec<NodeId> = sub
            .nodes
            .iter()
            .map(|&v| self.temporal_embedding(tape, v, t))
            .collect();
        let mut states = vec![init];

        for _layer in 1..=self.cfg.layers {
            let prev = states.last().unwrap().clone();
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let mut channels = Vec::with_capacity(depth);
                for (k, ring) in hood[v].iter().enumerate().take(depth) {
                    let peers: Vec<NodeId> = ring.iter().map(|&w| prev[w]).collect();
                    let attended = self.attention_aggregate(tape, prev[v], &peers);
                    let mes = match shared_edges {
                        Some(bias) => tape.sum(&[attended, bias]),
                        None => attended,
                    };
                    let joined = tape.concat(&[mes, prev[v]]);
                    let lin = tape.matvec(self.params, BlockRef::HopW(k), joined);
                    let bias = tape.param_row(self.params, BlockRef::HopB(k), 0);
                    let pre = tape.sum(&[lin, bias]);
                    channels.push(tape.relu(pre));
                }
                let merged = tape.sum(&channels);
                next.push(tape.scale(merged, 1.0 / depth as f64));
            }
            states.push(next);
        }
        NodeStates { states }
    }

    /// The neighborhood embedding of `entity` as seen at `t`: sample a
    /// subgraph, run message passing, and average the root's layer states.
    ///
    /// With the item-side graph disabled, items instead use the mean base
    /// embedding of the users in their earlier events (zeros when cold).
    pub fn structural_embedding(&mut self, tape: &mut Tape, entity: EntityRef, t: i64) -> NodeId {
        if let Some(&hit) = self.structural_cache.get(&(entity, t)) {
            return hit;
        }
        let node = if !entity.is_user() && !self.cfg.item_graph {
            let events = self.ctx.events.events_of(entity);
            let cut = events.partition_point(|e| e.timestamp < t);
            if cut == 0 {
                tape.input(vec![0.0; self.cfg.dim])
            } else {
                let rows: Vec<NodeId> = events[..cut]
                    .iter()
                    .map(|e| tape.param_row(self.params, BlockRef::UserTable, e.counterpart))
                    .collect();
                let total = tape.sum(&rows);
                tape.scale(total, 1.0 / cut as f64)
            }
        } else {
            let side = if entity.is_user() { 0 } else { 1 };
            let seed = derive_seed(
                self.settings.seed,
                &[domain::SUBGRAPH, side, entity.index() as u64, t as u64],
            );
            let sampled = self.ctx.sample(entity, t, seed);
            let sub = if self.settings.drop_rate > 0.0 {
                crate::graphs::drop_node(&sampled, self.settings.drop_rate, seed)
            } else {
                sampled
            };
            let layers = self.khop_forward(tape, &sub, t);
            combine_layers(tape, &layers.root_layers()).expect("layers ≥ 1 by config validation")
        };
        self.structural_cache.insert((entity, t), node);
        node
    }

    /// Both views of an entity, cached per `(entity, t)`.
    pub fn encode(&mut self, tape: &mut Tape, entity: EntityRef, t: i64) -> Encoded {
        let temporal = self.temporal_embedding(tape, entity, t);
        let structural = self.structural_embedding(tape, entity, t);
        Encoded { temporal, structural }
    }

    /// Interaction likelihood in (0, 1): an MLP over the concatenated
    /// temporal and structural views of user and item, squashed by a sigmoid.
    pub fn predict(&mut self, tape: &mut Tape, user: usize, item: usize, t: i64) -> Result<NodeId> {
        if user >= self.params.user_table.rows {
            return Err(Error::Config(format!("user index {user} out of range")));
        }
        if item >= self.params.item_table.rows {
            return Err(Error::Config(format!("item index {item} out of range")));
        }
        let u = self.encode(tape, EntityRef::User(user), t);
        let i = self.encode(tape, EntityRef::Item(item), t);
        let joined = tape.concat(&[u.temporal, i.temporal, u.structural, i.structural]);

        let mut hidden = joined;
        let n_layers = self.params.mlp_w.len();
        for l in 0..n_layers {
            let lin = tape.matvec(self.params, BlockRef::MlpW(l), hidden);
            let bias = tape.param_row(self.params, BlockRef::MlpB(l), 0);
            let pre = tape.sum(&[lin, bias]);
            hidden = if l + 1 < n_layers { tape.relu(pre) } else { pre };
        }
        Ok(tape.sigmoid(hidden))
    }
}

/// Mean squared-error halves over a batch plus exact gradients.
///
/// Loss is `(1/2n) Σ (r̂ − r)²`; the whole batch shares one tape, so repeated
/// `(entity, t)` encodings are computed once.
pub fn forward_backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    ctx: &GraphContext,
    batch: &[Example],
    settings: SampleSettings,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Config("cannot train on an empty batch".into()));
    }
    let mut tape = Tape::new();
    let mut enc = Encoder::new(params, cfg, ctx, settings)?;
    let n = batch.len() as f64;
    let mut seeds = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for ex in batch {
        let node = enc.predict(&mut tape, ex.user, ex.item, ex.timestamp)?;
        let diff = tape.scalar(node) - ex.target;
        loss += diff * diff;
        seeds.push((node, diff / n));
    }
    loss /= 2.0 * n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite batch loss {loss}")));
    }
    let mut grads = params.zeros_like();
    tape.backward(params, &seeds, &mut grads);
    Ok((loss, grads))
}

/// `out[v][k]` = nodes at distance exactly `k+1` from `v` along sampled edges.
fn neighbors_by_hop(sub: &Subgraph, max_hop: usize) -> Vec<Vec<Vec<usize>>> {
    let n = sub.nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &sub.edges {
        adj[e.parent].push(e.child);
        adj[e.child].push(e.parent);
    }
    (0..n)
        .map(|v| {
            let mut seen = vec![false; n];
            seen[v] = true;
            let mut frontier = vec![v];
            let mut rings = Vec::with_capacity(max_hop);
            for _ in 0..max_hop {
                let mut next = Vec::new();
                for &x in &frontier {
                    for &w in &adj[x] {
                        if !seen[w] {
                            seen[w] = true;
                            next.push(w);
                        }
                    }
                }
                rings.push(next.clone());
                frontier = next;
            }
            rings
        })
        .collect()
}
