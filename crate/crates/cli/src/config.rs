//! Run configuration: a dataset source plus the experiment knobs, loaded
//! from JSON with every field optional.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fedrec_core::dataset::{filter_min_interactions, load_interactions_path, Dataset};
use fedrec_core::evaluation::AblationSpec;
use fedrec_core::pipeline::ExperimentConfig;
use fedrec_core::synthetic::{block_dataset, SyntheticSpec};

/// Where the interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Tab-separated `user  item  rating  timestamp` rows.
    File {
        path: PathBuf,
        /// Iterative minimum-interaction threshold; 0 keeps everything.
        #[serde(default)]
        min_interactions: usize,
    },
    /// Seeded block-structured interactions, for demos and smoke tests.
    Synthetic { spec: SyntheticSpec },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            spec: SyntheticSpec { users: 50, items: 100, blocks: 2, events_per_user: 20, time_span: 100_000 },
        }
    }
}

fn default_ratios() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

fn default_ablations() -> Vec<AblationSpec> {
    vec![
        AblationSpec::default(),
        AblationSpec { attention: false, ..Default::default() },
        AblationSpec { item_graph: false, ..Default::default() },
        AblationSpec { implicit_user: false, implicit_item: false, ..Default::default() },
        AblationSpec { neighbor_public: false, ..Default::default() },
    ]
}

/// Everything a run needs. Unknown fields are rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub experiment: ExperimentConfig,
    /// Public ratios visited by `sweep-privacy`.
    pub ratios: Vec<f64>,
    /// Variants visited by `ablate`.
    pub ablations: Vec<AblationSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::default(),
            experiment: ExperimentConfig::default(),
            ratios: default_ratios(),
            ablations: default_ablations(),
        }
    }
}

impl RunConfig {
    /// Loads the config (or the defaults when no path is given) and applies
    /// the command-line seed override.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = seed {
            cfg.experiment.seed = seed;
        }
        Ok(cfg)
    }

    /// Materializes the dataset this run trains on.
    pub fn load_dataset(&self) -> anyhow::Result<Dataset> {
        match &self.dataset {
            DatasetSource::File { path, min_interactions } => {
                let (ds, _) = load_interactions_path(path)
                    .with_context(|| format!("loading {}", path.display()))?;
                if *min_interactions > 0 {
                    let (filtered, _, _) = filter_min_interactions(&ds, *min_interactions)?;
                    Ok(filtered)
                } else {
                    Ok(ds)
                }
            }
            DatasetSource::Synthetic { spec } => Ok(block_dataset(spec, self.experiment.seed)?),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, recorded in run summaries.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        format!("{digest:x}")
    }
}
