//! Checkpoints: a JSON manifest (tensor names, shapes, dtype, model config)
//! plus one little-endian f32 flat binary per tensor.
//!
//! Values are stored at f32 precision. Loading widens exactly, so a
//! save → load → save cycle reproduces every file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{Mat, ModelConfig, ModelParams};

const DTYPE: &str = "f32";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes `params` under `dir` (created if missing).
pub fn save_checkpoint(dir: &Path, params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, mat) in params.tensors() {
        let file = format!("{name}.bin");
        let mut bytes = Vec::with_capacity(mat.data.len() * 4);
        for &v in &mat.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        entries.push(TensorEntry { name, rows: mat.rows, cols: mat.cols, file });
    }
    let manifest = Manifest {
        dtype: DTYPE.into(),
        config: cfg.clone(),
        tensors: entries,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_mat(dir: &Path, entry: &TensorEntry) -> Result<Mat> {
    let bytes = fs::read(dir.join(&entry.file))?;
    let want = entry.rows * entry.cols * 4;
    if bytes.len() != want {
        return Err(Error::Checkpoint(format!(
            "tensor {}: expected {want} bytes, found {}",
            entry.name,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Mat { rows: entry.rows, cols: entry.cols, data })
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, ModelConfig)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.dtype != DTYPE {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
    }
    let cfg = manifest.config.clone();
    cfg.validate()?;

    let mut user_table = None;
    let mut item_table = None;
    let mut time_buckets = None;
    let mut edge_kinds = None;
    let mut combine = None;
    let mut attn_w = Vec::new();
    let mut attn_a = Vec::new();
    let mut hop_w = Vec::new();
    let mut hop_b = Vec::new();
    let mut mlp_w = Vec::new();
    let mut mlp_b = Vec::new();

    let indexed = |name: &str, prefix: &str| -> Option<usize> {
        name.strip_prefix(prefix).and_then(|s| s.parse().ok())
    };
    for entry in &manifest.tensors {
        let mat = read_mat(dir, entry)?;
        match entry.name.as_str() {
            "user_table" => user_table = Some(mat),
            "item_table" => item_table = Some(mat),
            "time_buckets" => time_buckets = Some(mat),
            "edge_kinds" => edge_kinds = Some(mat),
            "combine" => combine = Some(mat),
            name => {
                let slot = if let Some(h) = indexed(name, "attn_w_") {
                    (&mut attn_w, h)
                } else if let Some(h) = indexed(name, "attn_a_") {
                    (&mut attn_a, h)
                } else if let Some(k) = indexed(name, "hop_w_") {
                    (&mut hop_w, k)
                } else if let Some(k) = indexed(name, "hop_b_") {
                    (&mut hop_b, k)
                } else if let Some(l) = indexed(name, "mlp_w_") {
                    (&mut mlp_w, l)
                } else if let Some(l) = indexed(name, "mlp_b_") {
                    (&mut mlp_b, l)
                } else {
                    return Err(Error::Checkpoint(format!("unknown tensor {name}")));
                };
                let (list, idx) = slot;
                if idx != list.len() {
                    return Err(Error::Checkpoint(format!("tensor {name} out of order")));
                }
                list.push(mat);
            }
        }
    }

    let missing = |what: &str| Error::Checkpoint(format!("missing tensor {what}"));
    let params = ModelParams {
        user_table: user_table.ok_or_else(|| missing("user_table"))?,
        item_table: item_table.ok_or_else(|| missing("item_table"))?,
        time_buckets: time_buckets.ok_or_else(|| missing("time_buckets"))?,
        edge_kinds: edge_kinds.ok_or_else(|| missing("edge_kinds"))?,
        attn_w,
        attn_a,
        hop_w,
        hop_b,
        combine: combine.ok_or_else(|| missing("combine"))?,
        mlp_w,
        mlp_b,
    };
    if params.heads() != cfg.heads || params.attn_a.len() != cfg.heads {
        return Err(Error::Checkpoint("attention tensors do not match config".into()));
    }
    if params.hop_w.len() != params.hop_b.len() || params.hop_w.is_empty() {
        return Err(Error::Checkpoint("hop tensors incomplete".into()));
    }
    if params.mlp_w.len() != params.mlp_b.len() || params.mlp_w.is_empty() {
        return Err(Error::Checkpoint("mlp tensors incomplete".into()));
    }
    Ok((params, cfg))
}
