//! Server/client round orchestration: broadcast, parallel local training,
//! pairwise secure-aggregation masking, and sample-weighted averaging.
//!
//! All per-round randomness (client selection, per-client training seeds,
//! mask streams) is derived from the federation seed and the round number,
//! never from scheduling, so sequential and threaded runs are bit-identical.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::ClientShard;
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::graphs::GraphContext;
use crate::model::{ModelConfig, ModelParams};
use crate::parallel::{map_collect, Parallelism};
use crate::seed::{self, derive_seed, domain};
use crate::training::{early_stop, local_train, ClientUpdate, TrainConfig};

/// Fixed-point scale used by masked updates: 20 fractional bits.
pub const FIXED_POINT_SCALE: f64 = (1u64 << 20) as f64;

/// Round-level knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub rounds: usize,
    /// Clients sampled per round, without replacement.
    pub clients_per_round: usize,
    /// Mask updates so the server only sees their modular sum.
    pub masking: bool,
    /// Run a validation pass every this many rounds (0 = never).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig { rounds: 50, clients_per_round: 2, masking: true, eval_every: 10, seed: 0 }
    }
}

impl FedConfig {
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > n_clients {
            return Err(Error::Config(format!(
                "clients_per_round must lie in 1..={n_clients}, got {}",
                self.clients_per_round
            )));
        }
        if self.masking && self.clients_per_round < 2 {
            return Err(Error::MaskingNeedsPeers);
        }
        Ok(())
    }
}

/// One round's record in the server history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Sample-weighted mean of the participating clients' training losses.
    pub mean_loss: f64,
    pub validation: Option<MetricsReport>,
}

/// Everything the simulated server owns.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub params: ModelParams,
    /// Completed aggregation count.
    pub round: usize,
    pub history: Vec<RoundRecord>,
}

impl ServerState {
    pub fn new(params: ModelParams) -> ServerState {
        ServerState { params, round: 0, history: Vec::new() }
    }
}

/// A client's payload once masked: fixed-point integers modulo 2^64.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedUpdate {
    pub client_id: usize,
    /// Sent in the clear; the server needs it only for bookkeeping since
    /// updates arrive pre-scaled.
    pub sample_count: usize,
    pub payload: Vec<u64>,
}

/// `|D_k| / Σ|D|` per update, in the given order.
pub fn aggregation_weights(sample_counts: &[usize]) -> Vec<f64> {
    let total: usize = sample_counts.iter().sum();
    sample_counts.iter().map(|&n| n as f64 / total as f64).collect()
}

/// Sample-weighted elementwise average, accumulated in ascending client_id
/// order with 64-bit floats.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<ModelParams> {
    if updates.is_empty() {
        return Err(Error::Config("no client updates to aggregate".into()));
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);

    let first = &ordered[0].params;
    let shapes: Vec<(usize, usize)> = first.tensors().iter().map(|(_, m)| (m.rows, m.cols)).collect();
    for u in &ordered[1..] {
        let theirs: Vec<(usize, usize)> = u.params.tensors().iter().map(|(_, m)| (m.rows, m.cols)).collect();
        if theirs != shapes {
            return Err(Error::Config(format!(
                "client {} sent parameters of a different shape",
                u.client_id
            )));
        }
    }

    let counts: Vec<usize> = ordered.iter().map(|u| u.sample_count).collect();
    let weights = aggregation_weights(&counts);
    let mut acc = first.zeros_like();
    for (update, w) in ordered.iter().zip(weights) {
        for ((_, dst), (_, src)) in acc.tensors_mut().into_iter().zip(update.params.tensors()) {
            dst.data.iter_mut().zip(&src.data).for_each(|(d, s)| *d += w * s);
        }
    }
    Ok(acc)
}

fn quantize(x: f64) -> u64 {
    (x * FIXED_POINT_SCALE).round() as i64 as u64
}

fn dequantize(q: u64) -> f64 {
    (q as i64) as f64 / FIXED_POINT_SCALE
}

/// Pre-scales the update by its aggregation weight, quantizes to fixed point,
/// and adds the pairwise masks shared with every round peer.
///
/// The mask stream for a pair is keyed by `(round_seed, low id, high id)`;
/// the lower id adds it and the higher id subtracts it, so masks cancel in
/// the modular sum across the full participant set and nowhere else.
pub fn mask_update(
    update: &ClientUpdate,
    round_peers: &[usize],
    total_samples: usize,
    round_seed: u64,
) -> Result<MaskedUpdate> {
    if round_peers.len() < 2 {
        return Err(Error::MaskingNeedsPeers);
    }
    let me = update.client_id;
    debug_assert!(round_peers.contains(&me));
    let weight = update.sample_count as f64 / total_samples as f64;
    let mut payload: Vec<u64> = update.params.flatten().iter().map(|&x| quantize(weight * x)).collect();

    for &peer in round_peers {
        if peer == me {
            continue;
        }
        let (lo, hi) = (me.min(peer), me.max(peer));
        let mut rng = seed::seeded_rng(round_seed, &[domain::MASK_ROUND, lo as u64, hi as u64]);
        for slot in payload.iter_mut() {
            let mask = rng.next_u64();
            *slot = if me == lo { slot.wrapping_add(mask) } else { slot.wrapping_sub(mask) };
        }
    }
    Ok(MaskedUpdate { client_id: me, sample_count: update.sample_count, payload })
}

/// Modular sum of masked payloads, dequantized into `template`'s shapes.
///
/// The participant set must match `expected_peers` exactly: with anyone
/// missing the masks cannot cancel, so the round aborts.
pub fn unmask_aggregate(
    masked: &[MaskedUpdate],
    expected_peers: &[usize],
    template: &ModelParams,
) -> Result<ModelParams> {
    let mut got: Vec<usize> = masked.iter().map(|m| m.client_id).collect();
    got.sort_unstable();
    let mut expected: Vec<usize> = expected_peers.to_vec();
    expected.sort_unstable();
    if got != expected {
        return Err(Error::ParticipantDropout { expected: expected.len(), got: got.len() });
    }
    let len = template.len();
    if masked.iter().any(|m| m.payload.len() != len) {
        return Err(Error::Config("masked payload length does not match parameters".into()));
    }
    let mut sum = vec![0u64; len];
    for m in masked {
        sum.iter_mut().zip(&m.payload).for_each(|(acc, &q)| *acc = acc.wrapping_add(q));
    }
    let flat: Vec<f64> = sum.into_iter().map(dequantize).collect();
    template.unflatten(&flat)
}

/// The immutable wiring of one federated run.
pub struct Simulation<'a> {
    pub shards: &'a [ClientShard],
    /// Per-shard graph context, same order as `shards`.
    pub contexts: &'a [GraphContext],
    pub model_cfg: &'a ModelConfig,
    pub fed: &'a FedConfig,
    pub train: &'a TrainConfig,
    pub parallelism: Parallelism,
}

impl Simulation<'_> {
    /// One full round: seeded client sample, broadcast, parallel local
    /// training, (masked) aggregation. Any client failure aborts the round
    /// and leaves `state` untouched.
    pub fn run_round(&self, state: &ServerState) -> Result<ServerState> {
        self.fed.validate(self.shards.len())?;
        debug_assert_eq!(self.shards.len(), self.contexts.len());
        let round = state.round as u64;

        let mut selected: Vec<usize> = {
            let mut rng = seed::seeded_rng(self.fed.seed, &[domain::CLIENT_SELECT, round]);
            let indices: Vec<usize> = (0..self.shards.len()).collect();
            indices
                .choose_multiple(&mut rng, self.fed.clients_per_round)
                .copied()
                .collect()
        };
        selected.sort_unstable();

        let jobs: Vec<(usize, TrainConfig)> = selected
            .iter()
            .map(|&idx| {
                let id = self.shards[idx].client_id as u64;
                let seed = derive_seed(self.fed.seed, &[domain::CLIENT_ROUND, round, id]);
                (idx, TrainConfig { seed, ..self.train.clone() })
            })
            .collect();

        let updates: Result<Vec<ClientUpdate>> = map_collect(self.parallelism, &jobs, |(idx, cfg)| {
            local_train(&self.shards[*idx], &state.params, self.model_cfg, cfg, &self.contexts[*idx])
        })
        .into_iter()
        .collect();
        let updates = updates?;

        let counts: Vec<usize> = updates.iter().map(|u| u.sample_count).collect();
        let total: usize = counts.iter().sum();
        let mean_loss = updates
            .iter()
            .map(|u| u.train_loss * u.sample_count as f64 / total as f64)
            .sum();

        let params = if self.fed.masking {
            let peers: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
            let mask_seed = derive_seed(self.fed.seed, &[domain::MASK_ROUND, round]);
            let masked: Result<Vec<MaskedUpdate>> = updates
                .iter()
                .map(|u| mask_update(u, &peers, total, mask_seed))
                .collect();
            unmask_aggregate(&masked?, &peers, &state.params)?
        } else {
            aggregate(&updates)?
        };

        let mut history = state.history.clone();
        history.push(RoundRecord { round: state.round, mean_loss, validation: None });
        Ok(ServerState { params, round: state.round + 1, history })
    }

    /// Runs up to `rounds` rounds from `initial`, validating on the
    /// configured cadence and stopping early once the validation ranking
    /// metric stalls for the training patience. `observe` fires after every
    /// completed round (for logging, timing, checkpoints).
    pub fn orchestrate<V, O>(&self, initial: ModelParams, mut validate: V, mut observe: O) -> Result<ServerState>
    where
        V: FnMut(&ModelParams, usize) -> Result<MetricsReport>,
        O: FnMut(&ServerState) -> Result<()>,
    {
        let mut state = ServerState::new(initial);
        let mut val_history = Vec::new();
        for _ in 0..self.fed.rounds {
            let mut next = self.run_round(&state)?;
            if self.fed.eval_every > 0 && next.round % self.fed.eval_every == 0 {
                let report = validate(&next.params, next.round)?;
                next.history.last_mut().expect("round just ran").validation = Some(report);
                val_history.push(report.recall_at_k);
            }
            observe(&next)?;
            state = next;
            if early_stop(&val_history, self.train.early_stop_patience) {
                log::info!("validation stalled; stopping after round {}", state.round);
                break;
            }
        }
        Ok(state)
    }
}
