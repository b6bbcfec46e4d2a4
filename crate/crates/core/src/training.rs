//! Client-local optimization: negative sampling, the epoch/batch loop,
//! SGD and adaptive-moment updates, and early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ClientShard;
use crate::error::{Error, Result};
use crate::graphs::GraphContext;
use crate::model::{forward_backward, Example, ModelConfig, ModelParams, SampleSettings};
use crate::seed::{self, derive_seed, domain};

/// Parameter-update rule applied after each batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Optimizer {
        Optimizer::Adam { beta1: default_beta1(), beta2: default_beta2(), epsilon: default_epsilon() }
    }
}

/// Knobs for one client's local optimization pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub early_stop_patience: usize,
    pub optimizer: Optimizer,
    /// Per-call seed; the orchestrator derives a fresh one per client-round.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            local_epochs: 1,
            batch_size: 128,
            negatives_per_positive: 4,
            early_stop_patience: 10,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be finite and ≥ 0".into()));
        }
        if self.local_epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config(
                "local_epochs, batch_size, and early_stop_patience must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// What a client sends back to the server after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ModelParams,
    /// Local interaction count; the aggregation weight.
    pub sample_count: usize,
    /// Mean training loss across the local epochs.
    pub train_loss: f64,
}

/// Appends `ratio` sampled non-interacted items per positive.
///
/// Negatives are drawn uniformly from the global item vocabulary, rejecting
/// the user's own items; draws are keyed by `(seed, user, item, t)`, so the
/// result does not depend on batch composition or ordering. A user who has
/// interacted with every item contributes no negatives (logged once per call
/// site at warn level).
pub fn sample_negatives(shard: &ClientShard, positives: &[Example], ratio: usize, seed: u64) -> Vec<Example> {
    let mut batch = positives.to_vec();
    if ratio == 0 {
        return batch;
    }
    let n_items = shard.data.n_items;
    let mut itemsets: std::collections::HashMap<usize, std::collections::HashSet<usize>> =
        std::collections::HashMap::new();

    for pos in positives {
        let seen = itemsets
            .entry(pos.user)
            .or_insert_with(|| shard.data.items_of(pos.user));
        if seen.len() >= n_items {
            log::warn!(
                "user {} has interacted with all {} items; skipping negatives",
                pos.user,
                n_items
            );
            continue;
        }
        let mut rng = seed::seeded_rng(
            seed,
            &[domain::NEGATIVES, pos.user as u64, pos.item as u64, pos.timestamp as u64],
        );
        let mut drawn = 0;
        let mut attempts = 0;
        let attempt_cap = 100 * ratio.max(1);
        while drawn < ratio && attempts < attempt_cap {
            attempts += 1;
            let candidate = rng.gen_range(0..n_items);
            if seen.contains(&candidate) {
                continue;
            }
            batch.push(Example {
                user: pos.user,
                item: candidate,
                timestamp: pos.timestamp,
                target: 0.0,
            });
            drawn += 1;
        }
        if drawn < ratio {
            log::warn!("user {}: drew {drawn}/{ratio} negatives before giving up", pos.user);
        }
    }
    batch
}

/// One plain SGD step: `w ← w − γ·g`, tensor by tensor.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, learning_rate: f64) {
    for ((_, w), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        w.data.iter_mut().zip(&g.data).for_each(|(w, g)| *w -= learning_rate * g);
    }
}

/// Adaptive-moment state over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> AdamState {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0, beta1, beta2, epsilon }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, learning_rate: f64) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut cursor = 0;
        let grad_tensors = grads.tensors();
        for ((_, w), (_, g)) in params.tensors_mut().into_iter().zip(grad_tensors) {
            for (wi, gi) in w.data.iter_mut().zip(&g.data) {
                let m = &mut self.m[cursor];
                let v = &mut self.v[cursor];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *wi -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                cursor += 1;
            }
        }
    }
}

/// Runs the client's local epochs starting from a copy of `global`.
///
/// Per epoch: seeded shuffle of the shard's interactions, fixed-size batches
/// augmented with sampled negatives, one forward/backward per batch, then a
/// parameter step. The returned loss is the example-weighted mean across all
/// batches of all epochs.
pub fn local_train(
    shard: &ClientShard,
    global: &ModelParams,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    ctx: &GraphContext,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    if shard.data.is_empty() {
        return Err(Error::EmptyDataset(format!(" (client {} has no interactions)", shard.client_id)));
    }

    let positives: Vec<Example> = shard
        .data
        .interactions
        .iter()
        .map(|it| Example { user: it.user, item: it.item, timestamp: it.timestamp, target: 1.0 })
        .collect();

    let mut params = global.clone();
    let mut adam = match cfg.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam { beta1, beta2, epsilon } => {
            Some(AdamState::new(global.len(), beta1, beta2, epsilon))
        }
    };

    let mut loss_weighted = 0.0;
    let mut examples_seen = 0usize;
    for epoch in 0..cfg.local_epochs {
        let epoch_seed = derive_seed(cfg.seed, &[domain::EPOCH_SHUFFLE, epoch as u64]);
        let mut order = positives.clone();
        order.shuffle(&mut seed::seeded_rng(epoch_seed, &[domain::EPOCH_SHUFFLE]));

        let settings = SampleSettings { seed: epoch_seed, drop_rate: ctx.cfg.drop_node_rate };
        for chunk in order.chunks(cfg.batch_size) {
            let batch = sample_negatives(shard, chunk, cfg.negatives_per_positive, epoch_seed);
            let (loss, grads) = forward_backward(&params, model_cfg, ctx, &batch, settings)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "client {}: non-finite loss in epoch {epoch}",
                    shard.client_id
                )));
            }
            match adam.as_mut() {
                Some(state) => state.step(&mut params, &grads, cfg.learning_rate),
                None => sgd_step(&mut params, &grads, cfg.learning_rate),
            }
            loss_weighted += loss * batch.len() as f64;
            examples_seen += batch.len();
        }
    }

    Ok(ClientUpdate {
        client_id: shard.client_id,
        params,
        sample_count: shard.sample_count,
        train_loss: loss_weighted / examples_seen as f64,
    })
}

/// True once the best value has not strictly improved for `patience`
/// consecutive entries (higher is better).
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    assert!(patience >= 1, "patience must be ≥ 1");
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    for &v in history {
        if v > best {
            best = v;
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    since_best >= patience
}
