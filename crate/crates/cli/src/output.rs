//! Artifact writers for run directories: CSV tables and pretty JSON.
//!
//! Floats are written with Rust's shortest-roundtrip formatting, so files
//! from identical runs are byte-identical (the wall-clock `seconds` column
//! of the history is the one deliberate exception).

use std::fs;
use std::path::Path;

use fedrec_core::evaluation::MetricsReport;
use fedrec_core::federation::RoundRecord;
use fedrec_core::pipeline::{AblationRow, SweepRow};

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One row per round; the validation columns stay empty on rounds without a
/// validation pass.
pub fn history_csv(history: &[RoundRecord], seconds: &[f64], k: usize) -> String {
    let mut out = format!("round,mean_loss,val_recall@{k},val_ndcg@{k},val_rmse,val_mae,seconds\n");
    for (rec, sec) in history.iter().zip(seconds) {
        let val = match &rec.validation {
            Some(v) => format!("{},{},{},{}", v.recall_at_k, v.ndcg_at_k, v.rmse, v.mae),
            None => ",,,".to_string(),
        };
        out.push_str(&format!("{},{},{},{sec:.3}\n", rec.round, rec.mean_loss, val));
    }
    out
}

pub fn metrics_csv(m: &MetricsReport) -> String {
    let k = m.k;
    format!(
        "recall@{k},ndcg@{k},rmse,mae,n_users\n{},{},{},{},{}\n",
        m.recall_at_k, m.ndcg_at_k, m.rmse, m.mae, m.n_users_evaluated
    )
}

pub fn sweep_csv(rows: &[SweepRow], k: usize) -> String {
    let mut out = format!("public_ratio,mode,recall@{k},ndcg@{k},rmse,mae\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.public_ratio,
            r.mode.label(),
            r.metrics.recall_at_k,
            r.metrics.ndcg_at_k,
            r.metrics.rmse,
            r.metrics.mae
        ));
    }
    out
}

pub fn ablation_csv(rows: &[AblationRow], k: usize) -> String {
    let mut out = format!("variant,recall@{k},ndcg@{k},rmse,mae\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.variant, r.metrics.recall_at_k, r.metrics.ndcg_at_k, r.metrics.rmse, r.metrics.mae
        ));
    }
    out
}
