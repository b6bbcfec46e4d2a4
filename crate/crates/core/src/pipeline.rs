//! Experiment assembly: splitting, client sharding, public/private graph
//! contexts, federated training, and final evaluation, plus the privacy
//! sweep and ablation drivers built on top.
//!
//! The privacy boundary is drawn here. Client graph structure (time slices
//! and implicit relations) is built from the client's *public* training
//! fraction only, while behavior sequences and training positives use the
//! full local data, which never leaves the client. The server-side
//! evaluation context sees just the union of the public fractions. The
//! centralized baseline inverts this: one party that trains directly, so it
//! only ever gets the public fraction, for structure *and* training.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_public_ratio, partition_clients, split, ClientShard, Dataset, SplitBundle, SplitMode,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, exclusion_sets, AblationSpec, EvalTask, MetricsReport};
use crate::federation::{FedConfig, ServerState, Simulation};
use crate::graphs::{GraphConfig, GraphContext};
use crate::model::{ModelConfig, ModelParams};
use crate::parallel::Parallelism;
use crate::training::TrainConfig;

/// Whether clients train locally or one party trains on the shared data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Federated,
    Centralized,
}

impl RunMode {
    pub fn label(&self) -> &'static str {
        match self {
            RunMode::Federated => "federated",
            RunMode::Centralized => "centralized",
        }
    }
}

/// Everything one experiment needs besides the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_clients: usize,
    /// Fraction of each user's interactions flagged as publicly shareable.
    pub public_ratio: f64,
    pub split_mode: SplitMode,
    /// Ranking cutoff for recall/NDCG.
    pub k: usize,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fed: FedConfig,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_clients: 4,
            public_ratio: 1.0,
            split_mode: SplitMode::default(),
            k: 20,
            graph: GraphConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            fed: FedConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.public_ratio) || !self.public_ratio.is_finite() {
            return Err(Error::Config(format!(
                "public_ratio must lie in [0, 1], got {}",
                self.public_ratio
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("ranking cutoff k must be at least 1".into()));
        }
        self.graph.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

/// The assembled artifacts of one experiment, before any training.
pub struct Prepared {
    pub splits: SplitBundle,
    pub shards: Vec<ClientShard>,
    /// Per-shard public masks, aligned with each shard's interactions.
    /// In centralized mode the shard already *is* the public subset, so the
    /// mask is all-true.
    pub public_masks: Vec<Vec<bool>>,
    pub client_ctxs: Vec<GraphContext>,
    /// Built from the union of the public fractions; what the server is
    /// allowed to see when it evaluates.
    pub server_ctx: GraphContext,
    /// One past the last training timestamp.
    pub t_eval: i64,
    pub n_users: usize,
    pub n_items: usize,
}

/// Splits, shards, applies the public masks, and builds every graph context.
pub fn prepare(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    ablation: &AblationSpec,
    mode: RunMode,
) -> Result<Prepared> {
    cfg.validate()?;
    let splits = split(ds, cfg.seed, cfg.split_mode);
    if splits.train.is_empty() {
        return Err(Error::EmptyDataset(" after splitting".into()));
    }
    let t_eval = splits.train.interactions.iter().map(|i| i.timestamp).max().unwrap() + 1;
    let flags = ablation.graph_flags();

    let n_clients = match mode {
        RunMode::Federated => cfg.n_clients,
        RunMode::Centralized => 1,
    };
    let raw_shards = partition_clients(&splits.train, n_clients, cfg.seed)?;

    let mut shards = Vec::with_capacity(raw_shards.len());
    let mut public_masks = Vec::with_capacity(raw_shards.len());
    let mut client_ctxs = Vec::with_capacity(raw_shards.len());
    let mut public_union: Vec<crate::dataset::Interaction> = Vec::new();

    for shard in raw_shards {
        let mask = apply_public_ratio(&shard, cfg.public_ratio, cfg.seed)?;
        let public = shard.data.filtered_by_index(|i| mask[i]);
        public_union.extend(public.interactions.iter().copied());
        match mode {
            RunMode::Federated => {
                // Structure from the public slice, sequences from all of it.
                client_ctxs.push(GraphContext::build(&public, &shard.data, &cfg.graph, flags)?);
                public_masks.push(mask);
                shards.push(shard);
            }
            RunMode::Centralized => {
                // The trainer only ever receives the public fraction.
                client_ctxs.push(GraphContext::build(&public, &public, &cfg.graph, flags)?);
                public_masks.push(vec![true; public.len()]);
                let sample_count = public.len();
                shards.push(ClientShard {
                    client_id: shard.client_id,
                    users: shard.users,
                    data: public,
                    sample_count,
                });
            }
        }
    }

    let union = Dataset::from_parts(public_union, ds.n_users, ds.n_items)?;
    let server_ctx = GraphContext::build(&union, &union, &cfg.graph, flags)?;

    Ok(Prepared {
        splits,
        shards,
        public_masks,
        client_ctxs,
        server_ctx,
        t_eval,
        n_users: ds.n_users,
        n_items: ds.n_items,
    })
}

/// A finished run: the server state (history included) and the test report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: ServerState,
    pub test: MetricsReport,
}

/// Runs one experiment end to end: prepare, train over rounds with periodic
/// validation, then score the test split with train ∪ val excluded.
/// `observe` fires after every completed round.
///
/// Centralized mode forces a single participant per round and disables
/// masking (there is no peer to mask against).
pub fn run_experiment<O>(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    ablation: &AblationSpec,
    mode: RunMode,
    parallelism: Parallelism,
    observe: O,
) -> Result<RunOutcome>
where
    O: FnMut(&ServerState) -> Result<()>,
{
    let prepared = prepare(ds, cfg, ablation, mode)?;
    let mut model_cfg = cfg.model.clone();
    ablation.apply_model(&mut model_cfg);
    // The experiment seed governs every stream, including the federation's.
    let fed = match mode {
        RunMode::Federated => FedConfig { seed: cfg.seed, ..cfg.fed.clone() },
        RunMode::Centralized => {
            FedConfig { clients_per_round: 1, masking: false, seed: cfg.seed, ..cfg.fed.clone() }
        }
    };

    let init = ModelParams::init(prepared.n_users, prepared.n_items, cfg.graph.depth, &model_cfg, cfg.seed)?;
    let val_exclude = exclusion_sets(&[&prepared.splits.train], prepared.n_users);

    let sim = Simulation {
        shards: &prepared.shards,
        contexts: &prepared.client_ctxs,
        model_cfg: &model_cfg,
        fed: &fed,
        train: &cfg.train,
        parallelism,
    };
    let state = sim.orchestrate(
        init,
        |params, _round| {
            evaluate(
                &EvalTask {
                    params,
                    model_cfg: &model_cfg,
                    ctx: &prepared.server_ctx,
                    exclude: &val_exclude,
                    t_eval: prepared.t_eval,
                    k: cfg.k,
                    seed: cfg.seed,
                    parallelism,
                },
                &prepared.splits.val,
            )
        },
        observe,
    )?;

    let test_exclude = exclusion_sets(&[&prepared.splits.train, &prepared.splits.val], prepared.n_users);
    let test = evaluate(
        &EvalTask {
            params: &state.params,
            model_cfg: &model_cfg,
            ctx: &prepared.server_ctx,
            exclude: &test_exclude,
            t_eval: prepared.t_eval,
            k: cfg.k,
            seed: cfg.seed,
            parallelism,
        },
        &prepared.splits.test,
    )?;

    Ok(RunOutcome { state, test })
}

/// One row of the privacy sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub public_ratio: f64,
    pub mode: RunMode,
    pub metrics: MetricsReport,
}

/// Trains and tests at each public ratio, once federated and once
/// centralized, with everything else held fixed.
pub fn privacy_sweep(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    ratios: &[f64],
    parallelism: Parallelism,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(ratios.len() * 2);
    for &p in ratios {
        for mode in [RunMode::Federated, RunMode::Centralized] {
            let point = ExperimentConfig { public_ratio: p, ..cfg.clone() };
            let out = run_experiment(ds, &point, &AblationSpec::default(), mode, parallelism, |_| Ok(()))?;
            rows.push(SweepRow { public_ratio: p, mode, metrics: out.test });
        }
    }
    Ok(rows)
}

/// One row of an ablation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub spec: AblationSpec,
    pub metrics: MetricsReport,
}

/// Trains and tests one federated run per variant.
pub fn run_ablation(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    specs: &[AblationSpec],
    parallelism: Parallelism,
) -> Result<Vec<AblationRow>> {
    specs
        .iter()
        .map(|spec| {
            let out = run_experiment(ds, cfg, spec, RunMode::Federated, parallelism, |_| Ok(()))?;
            Ok(AblationRow { variant: spec.label(), spec: *spec, metrics: out.test })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{block_dataset, SyntheticSpec};

    fn toy_dataset() -> Dataset {
        let spec = SyntheticSpec { users: 12, items: 12, blocks: 2, events_per_user: 6, time_span: 1_000 };
        block_dataset(&spec, 42).unwrap()
    }

    fn toy_config() -> ExperimentConfig {
        ExperimentConfig {
            n_clients: 2,
            public_ratio: 1.0,
            k: 5,
            graph: GraphConfig {
                n_slices: 2,
                depth: 1,
                fanout: 3,
                seq_len: 5,
                drop_node_rate: 0.0,
                ..Default::default()
            },
            model: ModelConfig { dim: 2, heads: 1, layers: 1, ..Default::default() },
            train: TrainConfig {
                learning_rate: 0.05,
                batch_size: 16,
                negatives_per_positive: 1,
                ..Default::default()
            },
            fed: FedConfig { rounds: 2, clients_per_round: 2, masking: false, eval_every: 1, seed: 0 },
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn prepare_draws_the_privacy_boundary() {
        let ds = toy_dataset();
        let mut cfg = toy_config();
        cfg.public_ratio = 0.5;

        let fed = prepare(&ds, &cfg, &AblationSpec::default(), RunMode::Federated).unwrap();
        assert_eq!(fed.shards.len(), 2);
        let train_len: usize = fed.shards.iter().map(|s| s.data.len()).sum();
        assert_eq!(train_len, fed.splits.train.len(), "federated clients keep full local data");
        for (shard, mask) in fed.shards.iter().zip(&fed.public_masks) {
            let public = mask.iter().filter(|&&b| b).count();
            let expected: usize = shard
                .users
                .iter()
                .map(|&u| (0.5 * shard.data.user_range(u).len() as f64).ceil() as usize)
                .sum();
            assert_eq!(public, expected);
            assert!(public < shard.data.len());
        }
        let max_train = fed.splits.train.interactions.iter().map(|i| i.timestamp).max().unwrap();
        assert_eq!(fed.t_eval, max_train + 1);

        let cent = prepare(&ds, &cfg, &AblationSpec::default(), RunMode::Centralized).unwrap();
        assert_eq!(cent.shards.len(), 1);
        let public_total: usize = fed.public_masks.iter().flatten().filter(|&&b| b).count();
        assert_eq!(
            cent.shards[0].data.len(),
            public_total,
            "the centralized trainer sees exactly the public fraction"
        );
    }

    #[test]
    fn experiment_runs_validates_on_cadence_and_is_deterministic() {
        let ds = toy_dataset();
        let cfg = toy_config();
        let run = || {
            run_experiment(&ds, &cfg, &AblationSpec::default(), RunMode::Federated, Parallelism::Sequential, |_| Ok(()))
                .unwrap()
        };
        let a = run();
        assert_eq!(a.state.round, 2);
        assert_eq!(a.state.history.len(), 2);
        assert!(a.state.history.iter().all(|r| r.validation.is_some()));
        assert!(a.test.recall_at_k.is_finite() && a.test.rmse.is_finite());
        assert!(a.test.n_users_evaluated > 0);

        let b = run();
        assert_eq!(a, b, "identical configs must reproduce bit-identical outcomes");
    }

    #[test]
    fn cadence_zero_skips_validation_entirely() {
        let ds = toy_dataset();
        let mut cfg = toy_config();
        cfg.fed.eval_every = 0;
        let out = run_experiment(&ds, &cfg, &AblationSpec::default(), RunMode::Federated, Parallelism::Sequential, |_| Ok(()))
            .unwrap();
        assert!(out.state.history.iter().all(|r| r.validation.is_none()));
    }

    #[test]
    fn full_ablation_row_matches_the_plain_run() {
        let ds = toy_dataset();
        let cfg = toy_config();
        let rows = run_ablation(&ds, &cfg, &[AblationSpec::default()], Parallelism::Sequential).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].variant, "full");
        let plain =
            run_experiment(&ds, &cfg, &AblationSpec::default(), RunMode::Federated, Parallelism::Sequential, |_| Ok(()))
                .unwrap();
        assert_eq!(rows[0].metrics, plain.test);
    }

    #[test]
    fn ablation_variants_change_the_outcome() {
        let ds = toy_dataset();
        let cfg = toy_config();
        let specs = [
            AblationSpec::default(),
            AblationSpec { attention: false, ..Default::default() },
        ];
        let rows = run_ablation(&ds, &cfg, &specs, Parallelism::Sequential).unwrap();
        assert_eq!(rows[1].variant, "no-attention");
        assert_ne!(rows[0].metrics, rows[1].metrics);
    }

    #[test]
    fn sweep_emits_both_modes_per_ratio() {
        let ds = toy_dataset();
        let mut cfg = toy_config();
        cfg.fed.rounds = 1;
        cfg.fed.eval_every = 0;
        let rows = privacy_sweep(&ds, &cfg, &[0.5, 1.0], Parallelism::Sequential).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows.iter().map(|r| (r.public_ratio, r.mode)).collect::<Vec<_>>(),
            vec![
                (0.5, RunMode::Federated),
                (0.5, RunMode::Centralized),
                (1.0, RunMode::Federated),
                (1.0, RunMode::Centralized),
            ]
        );
        assert!(rows.iter().all(|r| r.metrics.recall_at_k.is_finite()));
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let ds = toy_dataset();
        let mut cfg = toy_config();
        cfg.public_ratio = 1.5;
        assert!(prepare(&ds, &cfg, &AblationSpec::default(), RunMode::Federated).is_err());
        cfg.public_ratio = 1.0;
        cfg.n_clients = 0;
        assert!(prepare(&ds, &cfg, &AblationSpec::default(), RunMode::Federated).is_err());
        cfg.n_clients = 2;
        cfg.k = 0;
        assert!(prepare(&ds, &cfg, &AblationSpec::default(), RunMode::Federated).is_err());
    }
}
