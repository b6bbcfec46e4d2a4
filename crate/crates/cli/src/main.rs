//! `fedrec` — a deterministic simulator of federated graph-based
//! recommendation: ingest raw interactions, train across simulated clients,
//! evaluate, sweep the public-visibility ratio, and ablate model variants.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use fedrec_core::dataset::{
    filter_min_interactions, load_interactions_path, split, Dataset, SplitMode,
};
use fedrec_core::evaluation::{evaluate, exclusion_sets, AblationSpec, EvalTask, MetricsReport};
use fedrec_core::model::{load_checkpoint, save_checkpoint};
use fedrec_core::parallel::Parallelism;
use fedrec_core::pipeline::{
    prepare, privacy_sweep, run_ablation, run_experiment, RunMode,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "fedrec", version, about = "Deterministic federated graph-recommender simulator")]
struct Cli {
    /// Worker threads for data-parallel sections (0 = all cores, 1 = sequential).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Densify, filter, and split a raw tab-separated interaction file.
    Ingest {
        /// Raw `user  item  rating  timestamp` TSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop users and items with fewer interactions, iterating to a fixpoint.
        #[arg(long, default_value_t = 0)]
        min_interactions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `eighty_ten_ten` or `eighty_twenty`.
        #[arg(long, default_value = "eighty_ten_ten")]
        split_mode: String,
    },
    /// Run federated training; write history, metrics, and a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-score a finished run's checkpoint on the held-out test split.
    Evaluate {
        /// A directory produced by `train`.
        #[arg(long)]
        run_dir: PathBuf,
        /// Optional file for the metrics JSON (stdout always gets it).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare federated vs centralized training across public ratios.
    SweepPrivacy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and test each configured model variant.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parallelism(threads: usize) -> Parallelism {
    match threads {
        1 => Parallelism::Sequential,
        n => Parallelism::Threads(n),
    }
}

fn parse_split_mode(name: &str) -> anyhow::Result<SplitMode> {
    match name {
        "eighty_ten_ten" => Ok(SplitMode::EightyTenTen),
        "eighty_twenty" => Ok(SplitMode::EightyTwenty),
        other => anyhow::bail!("unknown split mode {other:?} (expected eighty_ten_ten or eighty_twenty)"),
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let par = parallelism(cli.threads);
    match cli.command {
        Command::Ingest { input, out, min_interactions, seed, split_mode } => {
            cmd_ingest(&input, &out, min_interactions, seed, &split_mode)
        }
        Command::Train { config, out, seed } => cmd_train(config.as_deref(), &out, seed, par),
        Command::Evaluate { run_dir, out } => cmd_evaluate(&run_dir, out.as_deref(), par),
        Command::SweepPrivacy { config, out, seed } => cmd_sweep(config.as_deref(), &out, seed, par),
        Command::Ablate { config, out, seed } => cmd_ablate(config.as_deref(), &out, seed, par),
    }
}

fn write_tsv(path: &Path, ds: &Dataset) -> anyhow::Result<()> {
    let mut text = String::new();
    for it in &ds.interactions {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", it.user, it.item, it.rating, it.timestamp));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_id_table(path: &Path, raw: &[String]) -> anyhow::Result<()> {
    let mut text = String::new();
    for (dense, raw_id) in raw.iter().enumerate() {
        text.push_str(&format!("{raw_id}\t{dense}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct IngestManifest {
    version: String,
    seed: u64,
    split_mode: SplitMode,
    min_interactions: usize,
    n_users: usize,
    n_items: usize,
    n_interactions: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
}

fn cmd_ingest(input: &Path, out: &Path, min_interactions: usize, seed: u64, mode: &str) -> anyhow::Result<()> {
    let mode = parse_split_mode(mode)?;
    let (raw_ds, remap) = load_interactions_path(input).with_context(|| format!("loading {}", input.display()))?;
    let (ds, users, items) = if min_interactions > 0 {
        let (ds, kept_users, kept_items) = filter_min_interactions(&raw_ds, min_interactions)?;
        let users = kept_users.iter().map(|&old| remap.users[old].clone()).collect();
        let items = kept_items.iter().map(|&old| remap.items[old].clone()).collect();
        (ds, users, items)
    } else {
        (raw_ds, remap.users, remap.items)
    };

    fs::create_dir_all(out)?;
    write_tsv(&out.join("interactions.tsv"), &ds)?;
    write_id_table(&out.join("user_ids.tsv"), &users)?;
    write_id_table(&out.join("item_ids.tsv"), &items)?;

    let bundle = split(&ds, seed, mode);
    write_tsv(&out.join("split_train.tsv"), &bundle.train)?;
    write_tsv(&out.join("split_val.tsv"), &bundle.val)?;
    write_tsv(&out.join("split_test.tsv"), &bundle.test)?;

    let manifest = IngestManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        split_mode: mode,
        min_interactions,
        n_users: ds.n_users,
        n_items: ds.n_items,
        n_interactions: ds.len(),
        n_train: bundle.train.len(),
        n_val: bundle.val.len(),
        n_test: bundle.test.len(),
    };
    output::write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "ingested {} interactions ({} users, {} items) into {}",
        ds.len(),
        ds.n_users,
        ds.n_items,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    version: String,
    seed: u64,
    config_sha256: String,
    mode: String,
    rounds_completed: usize,
    final_train_loss: Option<f64>,
    test: MetricsReport,
}

fn cmd_train(config: Option<&Path>, out: &Path, seed: Option<u64>, par: Parallelism) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config, seed)?;
    let ds = cfg.load_dataset()?;
    fs::create_dir_all(out)?;
    output::write_json(&out.join("resolved_config.json"), &cfg)?;

    let mut seconds = Vec::new();
    let mut last = Instant::now();
    let outcome = run_experiment(
        &ds,
        &cfg.experiment,
        &AblationSpec::default(),
        RunMode::Federated,
        par,
        |state| {
            seconds.push(last.elapsed().as_secs_f64());
            last = Instant::now();
            if let Some(rec) = state.history.last() {
                match &rec.validation {
                    Some(v) => log::info!(
                        "round {} loss {:.6} val recall@{} {:.4}",
                        state.round,
                        rec.mean_loss,
                        v.k,
                        v.recall_at_k
                    ),
                    None => log::info!("round {} loss {:.6}", state.round, rec.mean_loss),
                }
            }
            Ok(())
        },
    )?;

    fs::write(
        out.join("history.csv"),
        output::history_csv(&outcome.state.history, &seconds, cfg.experiment.k),
    )?;
    save_checkpoint(&out.join("checkpoint"), &outcome.state.params, &cfg.experiment.model)?;
    output::write_json(&out.join("metrics.json"), &outcome.test)?;
    fs::write(out.join("metrics.csv"), output::metrics_csv(&outcome.test))?;
    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.experiment.seed,
        config_sha256: cfg.sha256(),
        mode: RunMode::Federated.label().to_string(),
        rounds_completed: outcome.state.round,
        final_train_loss: outcome.state.history.last().map(|r| r.mean_loss),
        test: outcome.test,
    };
    output::write_json(&out.join("run_summary.json"), &summary)?;

    let m = &outcome.test;
    println!(
        "trained {} rounds; test recall@{} {:.4} ndcg@{} {:.4} rmse {:.4} mae {:.4}",
        outcome.state.round, m.k, m.recall_at_k, m.k, m.ndcg_at_k, m.rmse, m.mae
    );
    Ok(())
}

fn cmd_evaluate(run_dir: &Path, out: Option<&Path>, par: Parallelism) -> anyhow::Result<()> {
    let cfg_path = run_dir.join("resolved_config.json");
    let cfg = RunConfig::load(Some(&cfg_path), None)?;
    let (params, model_cfg) = load_checkpoint(&run_dir.join("checkpoint"))?;
    let ds = cfg.load_dataset()?;
    let prepared = prepare(&ds, &cfg.experiment, &AblationSpec::default(), RunMode::Federated)?;
    let exclude = exclusion_sets(&[&prepared.splits.train, &prepared.splits.val], prepared.n_users);
    let report = evaluate(
        &EvalTask {
            params: &params,
            model_cfg: &model_cfg,
            ctx: &prepared.server_ctx,
            exclude: &exclude,
            t_eval: prepared.t_eval,
            k: cfg.experiment.k,
            seed: cfg.experiment.seed,
            parallelism: par,
        },
        &prepared.splits.test,
    )?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_sweep(config: Option<&Path>, out: &Path, seed: Option<u64>, par: Parallelism) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config, seed)?;
    let ds = cfg.load_dataset()?;
    fs::create_dir_all(out)?;
    output::write_json(&out.join("resolved_config.json"), &cfg)?;
    let rows = privacy_sweep(&ds, &cfg.experiment, &cfg.ratios, par)?;
    fs::write(out.join("sweep.csv"), output::sweep_csv(&rows, cfg.experiment.k))?;
    output::write_json(&out.join("sweep.json"), &rows)?;
    println!("swept {} public ratios into {}", cfg.ratios.len(), out.display());
    Ok(())
}

fn cmd_ablate(config: Option<&Path>, out: &Path, seed: Option<u64>, par: Parallelism) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config, seed)?;
    let ds = cfg.load_dataset()?;
    fs::create_dir_all(out)?;
    output::write_json(&out.join("resolved_config.json"), &cfg)?;
    let rows = run_ablation(&ds, &cfg.experiment, &cfg.ablations, par)?;
    fs::write(out.join("ablation.csv"), output::ablation_csv(&rows, cfg.experiment.k))?;
    output::write_json(&out.join("ablation.json"), &rows)?;
    for row in &rows {
        println!(
            "{}: recall@{} {:.4} ndcg@{} {:.4}",
            row.variant, cfg.experiment.k, row.metrics.recall_at_k, cfg.experiment.k, row.metrics.ndcg_at_k
        );
    }
    Ok(())
}
