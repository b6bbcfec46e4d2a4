//! Model parameters: embedding tables, attention heads, hop-update weights,
//! the head-combination projection, and the prediction MLP.
//!
//! Every tensor is a row-major [`Mat`]; vectors are 1-row matrices. Tensors
//! have a canonical order (the order of [`ModelParams::tensors`]) which fixes
//! the flattening used by aggregation, masking, and checkpoints.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, domain};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x` for a column vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }
}

/// Identifies one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockRef {
    UserTable,
    ItemTable,
    TimeBuckets,
    EdgeKinds,
    AttnW(usize),
    AttnA(usize),
    HopW(usize),
    HopB(usize),
    Combine,
    MlpW(usize),
    MlpB(usize),
}

/// Network shape: embedding width, attention heads, propagation layers, and
/// the MLP tower. The two booleans switch model variants used by ablations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Hidden widths of the prediction MLP; `None` means one hidden layer of
    /// `dim` units, `Some(vec![])` means a direct affine readout.
    pub mlp_hidden: Option<Vec<usize>>,
    /// Negative slope of the leaky-relu used on attention scores.
    pub negative_slope: f64,
    /// When false, attention weights are replaced by uniform mean pooling.
    pub attention: bool,
    /// When false, the item side skips message passing and uses the mean of
    /// its interacting users' base embeddings.
    pub item_graph: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 16,
            heads: 2,
            layers: 2,
            mlp_hidden: None,
            negative_slope: 0.2,
            attention: true,
            item_graph: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 {
            return Err(Error::Config("dim, heads, and layers must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.negative_slope) {
            return Err(Error::Config("negative_slope must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.mlp_hidden.clone().unwrap_or_else(|| vec![self.dim])
    }
}

/// Number of log2 time-delta embedding rows.
pub const TIME_ROWS: usize = crate::graphs::TIME_BUCKETS;
/// Edge-kind embedding rows: interaction, user-user, item-item.
pub const EDGE_KIND_ROWS: usize = 3;

/// All trainable state of the recommender.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user_table: Mat,
    pub item_table: Mat,
    pub time_buckets: Mat,
    pub edge_kinds: Mat,
    pub attn_w: Vec<Mat>,
    pub attn_a: Vec<Mat>,
    pub hop_w: Vec<Mat>,
    pub hop_b: Vec<Mat>,
    pub combine: Mat,
    pub mlp_w: Vec<Mat>,
    pub mlp_b: Vec<Mat>,
}

impl ModelParams {
    /// Seeded uniform(-1/√d, 1/√d) init for weights and tables; biases zero.
    pub fn init(n_users: usize, n_items: usize, depth: usize, cfg: &ModelConfig, master_seed: u64) -> Result<ModelParams> {
        cfg.validate()?;
        if depth == 0 {
            return Err(Error::Config("hop depth must be ≥ 1".into()));
        }
        let d = cfg.dim;
        let mut rng = seed::seeded_rng(master_seed, &[domain::PARAM_INIT]);
        let bound = 1.0 / (d as f64).sqrt();
        let mut uniform = |rows: usize, cols: usize| -> Mat {
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
            Mat { rows, cols, data }
        };

        let user_table = uniform(n_users, d);
        let item_table = uniform(n_items, d);
        let time_buckets = uniform(TIME_ROWS, d);
        let edge_kinds = uniform(EDGE_KIND_ROWS, d);
        let attn_w: Vec<Mat> = (0..cfg.heads).map(|_| uniform(d, d)).collect();
        let attn_a: Vec<Mat> = (0..cfg.heads).map(|_| uniform(1, 2 * d)).collect();
        let hop_w: Vec<Mat> = (0..depth).map(|_| uniform(d, 2 * d)).collect();
        let hop_b: Vec<Mat> = (0..depth).map(|_| Mat::zeros(1, d)).collect();
        let combine = uniform(d, cfg.heads * d);

        let mut mlp_w = Vec::new();
        let mut mlp_b = Vec::new();
        let mut in_dim = 4 * d;
        for h in cfg.hidden_sizes() {
            mlp_w.push(uniform(h, in_dim));
            mlp_b.push(Mat::zeros(1, h));
            in_dim = h;
        }
        mlp_w.push(uniform(1, in_dim));
        mlp_b.push(Mat::zeros(1, 1));

        Ok(ModelParams {
            user_table,
            item_table,
            time_buckets,
            edge_kinds,
            attn_w,
            attn_a,
            hop_w,
            hop_b,
            combine,
            mlp_w,
            mlp_b,
        })
    }

    /// A same-shape container of zeros (the gradient accumulator).
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for (_, m) in z.tensors_mut() {
            m.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn heads(&self) -> usize {
        self.attn_w.len()
    }

    pub fn depth(&self) -> usize {
        self.hop_w.len()
    }

    pub fn dim(&self) -> usize {
        self.user_table.cols
    }

    pub fn mat(&self, block: BlockRef) -> &Mat {
        match block {
            BlockRef::UserTable => &self.user_table,
            BlockRef::ItemTable => &self.item_table,
            BlockRef::TimeBuckets => &self.time_buckets,
            BlockRef::EdgeKinds => &self.edge_kinds,
            BlockRef::AttnW(h) => &self.attn_w[h],
            BlockRef::AttnA(h) => &self.attn_a[h],
            BlockRef::HopW(k) => &self.hop_w[k],
            BlockRef::HopB(k) => &self.hop_b[k],
            BlockRef::Combine => &self.combine,
            BlockRef::MlpW(l) => &self.mlp_w[l],
            BlockRef::MlpB(l) => &self.mlp_b[l],
        }
    }

    pub fn mat_mut(&mut self, block: BlockRef) -> &mut Mat {
        match block {
            BlockRef::UserTable => &mut self.user_table,
            BlockRef::ItemTable => &mut self.item_table,
            BlockRef::TimeBuckets => &mut self.time_buckets,
            BlockRef::EdgeKinds => &mut self.edge_kinds,
            BlockRef::AttnW(h) => &mut self.attn_w[h],
            BlockRef::AttnA(h) => &mut self.attn_a[h],
            BlockRef::HopW(k) => &mut self.hop_w[k],
            BlockRef::HopB(k) => &mut self.hop_b[k],
            BlockRef::Combine => &mut self.combine,
            BlockRef::MlpW(l) => &mut self.mlp_w[l],
            BlockRef::MlpB(l) => &mut self.mlp_b[l],
        }
    }

    /// Tensors in canonical order with their stable names.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = vec![
            ("user_table".into(), &self.user_table),
            ("item_table".into(), &self.item_table),
            ("time_buckets".into(), &self.time_buckets),
            ("edge_kinds".into(), &self.edge_kinds),
        ];
        for (h, m) in self.attn_w.iter().enumerate() {
            out.push((format!("attn_w_{h}"), m));
        }
        for (h, m) in self.attn_a.iter().enumerate() {
            out.push((format!("attn_a_{h}"), m));
        }
        for (k, m) in self.hop_w.iter().enumerate() {
            out.push((format!("hop_w_{k}"), m));
        }
        for (k, m) in self.hop_b.iter().enumerate() {
            out.push((format!("hop_b_{k}"), m));
        }
        out.push(("combine".into(), &self.combine));
        for (l, m) in self.mlp_w.iter().enumerate() {
            out.push((format!("mlp_w_{l}"), m));
        }
        for (l, m) in self.mlp_b.iter().enumerate() {
            out.push((format!("mlp_b_{l}"), m));
        }
        out
    }

    /// Mutable tensors in the same canonical order as [`tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = vec![
            ("user_table".into(), &mut self.user_table),
            ("item_table".into(), &mut self.item_table),
            ("time_buckets".into(), &mut self.time_buckets),
            ("edge_kinds".into(), &mut self.edge_kinds),
        ];
        for (h, m) in self.attn_w.iter_mut().enumerate() {
            out.push((format!("attn_w_{h}"), m));
        }
        for (h, m) in self.attn_a.iter_mut().enumerate() {
            out.push((format!("attn_a_{h}"), m));
        }
        for (k, m) in self.hop_w.iter_mut().enumerate() {
            out.push((format!("hop_w_{k}"), m));
        }
        for (k, m) in self.hop_b.iter_mut().enumerate() {
            out.push((format!("hop_b_{k}"), m));
        }
        out.push(("combine".into(), &mut self.combine));
        for (l, m) in self.mlp_w.iter_mut().enumerate() {
            out.push((format!("mlp_w_{l}"), m));
        }
        for (l, m) in self.mlp_b.iter_mut().enumerate() {
            out.push((format!("mlp_b_{l}"), m));
        }
        out
    }

    /// Total scalar parameter count.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates all tensors in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (_, m) in self.tensors() {
            out.extend_from_slice(&m.data);
        }
        out
    }

    /// Rebuilds a parameter set with this one's shapes from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != self.len() {
            return Err(Error::Config(format!(
                "flat vector has {} entries, parameters need {}",
                flat.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        let mut cursor = 0;
        for (_, m) in out.tensors_mut() {
            let len = m.data.len();
            m.data.copy_from_slice(&flat[cursor..cursor + len]);
            cursor += len;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        let cfg = ModelConfig { dim: 4, heads: 2, layers: 2, ..Default::default() };
        ModelParams::init(5, 7, 2, &cfg, 99).unwrap()
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = small();
        let b = small();
        assert_eq!(a, b);
        let bound = 1.0 / 2.0;
        for (name, m) in a.tensors() {
            for &x in &m.data {
                assert!(x.abs() <= bound, "{name} entry {x} outside init bound");
            }
        }
        // Biases start at zero.
        assert!(a.hop_b.iter().all(|b| b.data.iter().all(|&x| x == 0.0)));
        assert!(a.mlp_b.iter().all(|b| b.data.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn flatten_round_trips() {
        let p = small();
        let flat = p.flatten();
        assert_eq!(flat.len(), p.len());
        let q = p.unflatten(&flat).unwrap();
        assert_eq!(p, q);

        let bad = vec![0.0; flat.len() + 1];
        assert!(p.unflatten(&bad).is_err());
    }

    #[test]
    fn tensor_orders_agree() {
        let mut p = small();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = p.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names[0], "user_table");
        assert!(names.contains(&"attn_a_1".to_string()));
        assert_eq!(names.last().unwrap(), "mlp_b_1");
    }

    #[test]
    fn matvec_matches_hand_case() {
        let m = Mat { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
    }

    #[test]
    fn mlp_shapes_follow_hidden_config() {
        let cfg = ModelConfig { dim: 4, mlp_hidden: Some(vec![8, 3]), ..Default::default() };
        let p = ModelParams::init(2, 2, 1, &cfg, 0).unwrap();
        let dims: Vec<(usize, usize)> = p.mlp_w.iter().map(|m| (m.rows, m.cols)).collect();
        assert_eq!(dims, vec![(8, 16), (3, 8), (1, 3)]);

        let cfg = ModelConfig { dim: 4, mlp_hidden: Some(vec![]), ..Default::default() };
        let p = ModelParams::init(2, 2, 1, &cfg, 0).unwrap();
        let dims: Vec<(usize, usize)> = p.mlp_w.iter().map(|m| (m.rows, m.cols)).collect();
        assert_eq!(dims, vec![(1, 16)]);
    }
}
