//! Ranking and rating metrics plus the rank-all-unseen-items protocol.
//!
//! Ranking metrics follow the usual definitions: Recall@K is the hit fraction
//! of the truth set, NDCG@K discounts hits by log2 position. Rating errors
//! are computed against {1, 0} implicit labels over test positives and an
//! equal-sized seeded negative sample per user.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graphs::{GraphContext, GraphFlags};
use crate::model::{Encoder, ModelConfig, ModelParams, SampleSettings, Tape};
use crate::parallel::{map_collect, Parallelism};
use crate::seed::{self, domain};

/// Aggregate evaluation results for one model snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub rmse: f64,
    pub mae: f64,
    pub k: usize,
    pub n_users_evaluated: usize,
}

/// Model-variant toggles; everything on is the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub item_graph: bool,
    pub neighbor_public: bool,
    pub attention: bool,
    pub implicit_user: bool,
    pub implicit_item: bool,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            item_graph: true,
            neighbor_public: true,
            attention: true,
            implicit_user: true,
            implicit_item: true,
        }
    }
}

impl AblationSpec {
    pub fn graph_flags(&self) -> GraphFlags {
        GraphFlags {
            implicit_user: self.implicit_user,
            implicit_item: self.implicit_item,
            neighbor_public: self.neighbor_public,
        }
    }

    pub fn apply_model(&self, cfg: &mut ModelConfig) {
        cfg.attention = self.attention;
        cfg.item_graph = self.item_graph;
    }

    /// Short stable label for reports, e.g. `full` or `no-attention`.
    pub fn label(&self) -> String {
        let mut off = Vec::new();
        if !self.item_graph {
            off.push("item-graph");
        }
        if !self.neighbor_public {
            off.push("neighbor-public");
        }
        if !self.attention {
            off.push("attention");
        }
        if !self.implicit_user {
            off.push("implicit-user");
        }
        if !self.implicit_item {
            off.push("implicit-item");
        }
        if off.is_empty() {
            "full".into()
        } else {
            format!("no-{}", off.join("+"))
        }
    }
}

/// Item indices not in `exclude`, sorted by score descending; ties broken by
/// ascending index so rankings are reproducible.
pub fn rank_items_from_scores(scores: &[f64], exclude: &HashSet<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Scores every non-excluded item for `user` at `t_eval` with one shared
/// tape, so the user's encodings are computed once. Excluded slots stay 0
/// and must not be read.
pub fn score_items(
    params: &ModelParams,
    cfg: &ModelConfig,
    ctx: &GraphContext,
    user: usize,
    t_eval: i64,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut enc = Encoder::new(params, cfg, ctx, SampleSettings::eval(seed))?;
    let mut tape = Tape::new();
    let n_items = params.item_table.rows;
    let mut scores = vec![0.0; n_items];
    for (item, slot) in scores.iter_mut().enumerate() {
        if exclude.contains(&item) {
            continue;
        }
        let node = enc.predict(&mut tape, user, item, t_eval)?;
        *slot = tape.scalar(node);
    }
    Ok(scores)
}

/// Ranks every item the user has not been excluded from, best first.
pub fn rank_items(
    params: &ModelParams,
    cfg: &ModelConfig,
    ctx: &GraphContext,
    user: usize,
    t_eval: i64,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let scores = score_items(params, cfg, ctx, user, t_eval, exclude, seed)?;
    Ok(rank_items_from_scores(&scores, exclude))
}

/// |top-k ∩ truth| / |truth|.
pub fn recall_at_k(ranked: &[usize], truth: &HashSet<usize>, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|i| truth.contains(i)).count();
    hits as f64 / truth.len() as f64
}

/// DCG with 1/log2(position+1) gains over the top k, normalized by the ideal
/// DCG of min(k, |truth|) leading hits.
pub fn ndcg_at_k(ranked: &[usize], truth: &HashSet<usize>, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| truth.contains(item))
        .map(|(idx, _)| 1.0 / ((idx + 2) as f64).log2())
        .sum();
    let ideal: f64 = (1..=k.min(truth.len())).map(|p| 1.0 / ((p + 1) as f64).log2()).sum();
    dcg / ideal
}

/// Root-mean-square and mean-absolute error over (prediction, truth) pairs.
pub fn rating_errors(pairs: &[(f64, f64)]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let n = pairs.len() as f64;
    let (sq, abs) = pairs.iter().fold((0.0, 0.0), |(sq, abs), (pred, truth)| {
        let r = pred - truth;
        (sq + r * r, abs + r.abs())
    });
    ((sq / n).sqrt(), abs / n)
}

/// Distinct items per user pooled across `sources`, sized to `n_users`.
pub fn exclusion_sets(sources: &[&Dataset], n_users: usize) -> Vec<HashSet<usize>> {
    let mut out = vec![HashSet::new(); n_users];
    for ds in sources {
        for it in &ds.interactions {
            out[it.user].insert(it.item);
        }
    }
    out
}

/// Everything `evaluate` needs besides the split itself.
pub struct EvalTask<'a> {
    pub params: &'a ModelParams,
    pub model_cfg: &'a ModelConfig,
    pub ctx: &'a GraphContext,
    /// Per-user items removed from the candidate list (typically the user's
    /// training items, plus validation items when scoring the test split).
    pub exclude: &'a [HashSet<usize>],
    /// Reference time, one past the end of training history.
    pub t_eval: i64,
    pub k: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

struct PerUser {
    recall: f64,
    ndcg: f64,
    pairs: Vec<(f64, f64)>,
}

/// Metric computation over an arbitrary scorer; the model-free core of
/// [`evaluate`], also used by tests to inject oracle or random scorers.
pub fn evaluate_scored<S>(
    split: &Dataset,
    exclude: &[HashSet<usize>],
    n_items: usize,
    k: usize,
    seed: u64,
    parallelism: Parallelism,
    scorer: S,
) -> Result<MetricsReport>
where
    S: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    if split.is_empty() {
        return Err(Error::EmptyDataset(" (evaluation split)".into()));
    }
    let users = split.present_users();
    let outcomes = map_collect(parallelism, &users, |&user| -> Result<PerUser> {
        let truth = split.items_of(user);
        let scores = scorer(user)?;
        let ranked = rank_items_from_scores(&scores, &exclude[user]);
        let recall = recall_at_k(&ranked, &truth, k);
        let ndcg = ndcg_at_k(&ranked, &truth, k);

        let mut pairs: Vec<(f64, f64)> = truth
            .iter()
            .filter(|i| !exclude[user].contains(i))
            .map(|&i| (scores[i], 1.0))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let blocked: HashSet<usize> = exclude[user].union(&truth).copied().collect();
        if blocked.len() < n_items {
            let mut rng = seed::seeded_rng(seed, &[domain::EVAL_NEGATIVES, user as u64]);
            let want = pairs.len();
            let mut drawn = 0;
            let mut attempts = 0;
            while drawn < want && attempts < 100 * want.max(1) {
                attempts += 1;
                let candidate = rng.gen_range(0..n_items);
                if blocked.contains(&candidate) {
                    continue;
                }
                pairs.push((scores[candidate], 0.0));
                drawn += 1;
            }
        }
        Ok(PerUser { recall, ndcg, pairs })
    });

    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    let mut pooled = Vec::new();
    let mut evaluated = 0usize;
    for outcome in outcomes {
        let user = outcome?;
        recall_sum += user.recall;
        ndcg_sum += user.ndcg;
        pooled.extend(user.pairs);
        evaluated += 1;
    }
    let (rmse, mae) = rating_errors(&pooled);
    Ok(MetricsReport {
        recall_at_k: recall_sum / evaluated as f64,
        ndcg_at_k: ndcg_sum / evaluated as f64,
        rmse,
        mae,
        k,
        n_users_evaluated: evaluated,
    })
}

/// Ranks all unseen items per split user with the model and averages
/// per-user Recall@K / NDCG@K; rating errors pool every scored pair.
pub fn evaluate(task: &EvalTask, split: &Dataset) -> Result<MetricsReport> {
    let n_items = task.params.item_table.rows;
    evaluate_scored(
        split,
        task.exclude,
        n_items,
        task.k,
        task.seed,
        task.parallelism,
        |user| {
            score_items(
                task.params,
                task.model_cfg,
                task.ctx,
                user,
                task.t_eval,
                &task.exclude[user],
                task.seed,
            )
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;
    use crate::graphs::GraphConfig;

    fn items(xs: &[usize]) -> HashSet<usize> {
        xs.iter().copied().collect()
    }

    fn split_from(rows: &[(usize, usize)], n_users: usize, n_items: usize) -> Dataset {
        let data: Vec<Interaction> = rows
            .iter()
            .map(|&(user, item)| Interaction { user, item, rating: 1.0, timestamp: 1 })
            .collect();
        Dataset::from_parts(data, n_users, n_items).unwrap()
    }

    #[test]
    fn ranking_sorts_by_score_then_index() {
        assert_eq!(rank_items_from_scores(&[0.9, 0.1, 0.5], &HashSet::new()), vec![0, 2, 1]);
        assert_eq!(rank_items_from_scores(&[0.5, 0.5, 0.5], &HashSet::new()), vec![0, 1, 2]);
        assert_eq!(rank_items_from_scores(&[0.9, 0.1], &items(&[0, 1])), Vec::<usize>::new());
        assert_eq!(rank_items_from_scores(&[0.1, 0.9, 0.5], &items(&[1])), vec![2, 0]);
    }

    #[test]
    fn recall_hand_cases() {
        let ranked = vec![3, 1, 4, 0];
        assert_eq!(recall_at_k(&ranked, &items(&[3, 1]), 2), 1.0);
        assert_eq!(recall_at_k(&ranked, &items(&[3, 7]), 2), 0.5);
        assert_eq!(recall_at_k(&ranked, &items(&[7, 8]), 4), 0.0);
        assert_eq!(recall_at_k(&ranked, &items(&[0]), 2), 0.0);
    }

    #[test]
    fn ndcg_hand_cases() {
        // Truth at rank 1 with |truth| = 1 is ideal.
        assert_eq!(ndcg_at_k(&[5, 2], &items(&[5]), 2), 1.0);
        // Truth at rank 2: (1/log2(3)) / 1.
        let got = ndcg_at_k(&[9, 5], &items(&[5]), 2);
        assert!((got - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((got - 0.63093).abs() < 1e-4);
        // No hits.
        assert_eq!(ndcg_at_k(&[9, 5], &items(&[7]), 2), 0.0);
        // Two truths in the ideal order.
        let both = ndcg_at_k(&[1, 2, 3], &items(&[1, 2]), 3);
        assert!((both - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let ranked: Vec<usize> = (0..30).collect();
        let truth = items(&[4, 11, 17, 29]);
        let mut prev = 0.0;
        for k in 1..=30 {
            let r = recall_at_k(&ranked, &truth, k);
            assert!(r >= prev);
            prev = r;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn rating_error_hand_cases() {
        let (rmse, mae) = rating_errors(&[(1.0, 1.0), (2.0, 4.0)]);
        assert!((rmse - 2f64.sqrt()).abs() < 1e-12);
        assert!((mae - 1.0).abs() < 1e-12);

        let (rmse, mae) = rating_errors(&[(0.3, 0.3), (0.9, 0.9)]);
        assert_eq!((rmse, mae), (0.0, 0.0));

        // Constant residual makes the two coincide.
        let (rmse, mae) = rating_errors(&[(1.5, 1.0), (2.5, 2.0), (0.5, 0.0)]);
        assert!((rmse - 0.5).abs() < 1e-12);
        assert!((mae - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mae_never_exceeds_rmse() {
        let mut rng = seed::seeded_rng(7, &[99]);
        for _ in 0..200 {
            let pairs: Vec<(f64, f64)> = (0..17)
                .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let (rmse, mae) = rating_errors(&pairs);
            assert!(mae <= rmse + 1e-12);
        }
    }

    #[test]
    fn oracle_scorer_reaches_perfect_metrics() {
        let split = split_from(&[(0, 2), (0, 5), (1, 1)], 2, 8);
        let exclude = vec![HashSet::new(), HashSet::new()];
        let truth_by_user = [items(&[2, 5]), items(&[1])];
        let report = evaluate_scored(&split, &exclude, 8, 3, 0, Parallelism::Sequential, |u| {
            Ok((0..8).map(|i| if truth_by_user[u].contains(&i) { 1.0 } else { 0.0 }).collect())
        })
        .unwrap();
        assert_eq!(report.recall_at_k, 1.0);
        assert_eq!(report.ndcg_at_k, 1.0);
        assert_eq!(report.n_users_evaluated, 2);
        assert!(report.mae <= report.rmse);
    }

    #[test]
    fn matches_brute_force_evaluation_exactly() {
        // Independent straight-line evaluator over a seeded random instance.
        let mut rng = seed::seeded_rng(31, &[1]);
        for trial in 0..25u64 {
            let n_users = 6;
            let n_items = 15;
            let mut rows = Vec::new();
            for u in 0..n_users {
                let n_truth = 1 + (rng.gen::<usize>() % 3);
                let mut seen = HashSet::new();
                while seen.len() < n_truth {
                    seen.insert(rng.gen_range(0..n_items));
                }
                rows.extend(seen.into_iter().map(|i| (u, i)));
            }
            let split = split_from(&rows, n_users, n_items);
            let mut exclude = vec![HashSet::new(); n_users];
            for (u, set) in exclude.iter_mut().enumerate() {
                while set.len() < 3 {
                    let c = rng.gen_range(0..n_items);
                    if !split.items_of(u).contains(&c) {
                        set.insert(c);
                    }
                }
            }
            let scores: Vec<Vec<f64>> = (0..n_users)
                .map(|_| (0..n_items).map(|_| rng.gen::<f64>()).collect())
                .collect();

            let k = 4;
            let report = evaluate_scored(
                &split,
                &exclude,
                n_items,
                k,
                trial,
                Parallelism::Sequential,
                |u| Ok(scores[u].clone()),
            )
            .unwrap();

            // Brute force: enumerate candidates, sort, count hits by position.
            let mut recall_sum = 0.0;
            let mut ndcg_sum = 0.0;
            for u in 0..n_users {
                let truth = split.items_of(u);
                let mut cand: Vec<usize> =
                    (0..n_items).filter(|i| !exclude[u].contains(i)).collect();
                cand.sort_by(|&a, &b| scores[u][b].total_cmp(&scores[u][a]).then(a.cmp(&b)));
                for item in cand.iter().take(k) {
                    assert!(!exclude[u].contains(item), "excluded item was ranked");
                }
                let hits = cand.iter().take(k).filter(|i| truth.contains(i)).count();
                recall_sum += hits as f64 / truth.len() as f64;
                let mut dcg = 0.0;
                for (pos, item) in cand.iter().take(k).enumerate() {
                    if truth.contains(item) {
                        dcg += 1.0 / ((pos + 2) as f64).log2();
                    }
                }
                let ideal: f64 =
                    (1..=k.min(truth.len())).map(|p| 1.0 / ((p + 1) as f64).log2()).sum();
                ndcg_sum += dcg / ideal;
            }
            assert_eq!(report.recall_at_k, recall_sum / n_users as f64);
            assert_eq!(report.ndcg_at_k, ndcg_sum / n_users as f64);
        }
    }

    #[test]
    fn random_scorer_matches_hypergeometric_expectation() {
        // 10 users, 20 items, 1 truth item, k=5: P(hit) = 5/20.
        let n_users = 10;
        let n_items = 20;
        let k = 5;
        let split = split_from(&(0..n_users).map(|u| (u, u)).collect::<Vec<_>>(), n_users, n_items);
        let exclude = vec![HashSet::new(); n_users];
        let mut total = 0.0;
        let trials = 200;
        for trial in 0..trials {
            let report = evaluate_scored(
                &split,
                &exclude,
                n_items,
                k,
                trial,
                Parallelism::Sequential,
                |u| {
                    let mut rng = seed::seeded_rng(trial, &[0x5c0, u as u64]);
                    Ok((0..n_items).map(|_| rng.gen::<f64>()).collect())
                },
            )
            .unwrap();
            total += report.recall_at_k;
        }
        let mean = total / trials as f64;
        // 99% CI half-width for 2000 Bernoulli(0.25) draws ≈ 0.025.
        assert!((mean - 0.25).abs() < 0.025, "mean recall {mean}");
    }

    #[test]
    fn model_backed_evaluation_is_deterministic_and_sane() {
        let rows = [
            (0usize, 0usize, 1.0f64, 10i64),
            (0, 1, 1.0, 20),
            (1, 2, 1.0, 15),
            (1, 0, 1.0, 30),
            (2, 1, 1.0, 12),
        ];
        let data: Vec<Interaction> = rows
            .iter()
            .map(|&(user, item, rating, timestamp)| Interaction { user, item, rating, timestamp })
            .collect();
        let train = Dataset::from_parts(data, 3, 4).unwrap();
        let split = split_from(&[(0, 2), (1, 3), (2, 0)], 3, 4);
        let gcfg = GraphConfig::default();
        let ctx = GraphContext::build(&train, &train, &gcfg, GraphFlags::default()).unwrap();
        let mcfg = ModelConfig { dim: 3, heads: 1, layers: 1, ..Default::default() };
        let params = ModelParams::init(3, 4, gcfg.depth, &mcfg, 77).unwrap();
        let exclude = exclusion_sets(&[&train], 3);
        assert!(exclude[0].contains(&0) && exclude[0].contains(&1));

        let task = EvalTask {
            params: &params,
            model_cfg: &mcfg,
            ctx: &ctx,
            exclude: &exclude,
            t_eval: 31,
            k: 2,
            seed: 5,
            parallelism: Parallelism::Sequential,
        };
        let a = evaluate(&task, &split).unwrap();
        let b = evaluate(&task, &split).unwrap();
        assert_eq!(a, b);
        assert!(a.recall_at_k >= 0.0 && a.recall_at_k <= 1.0);
        assert!(a.ndcg_at_k >= 0.0 && a.ndcg_at_k <= 1.0);
        assert!(a.mae <= a.rmse);
        assert_eq!(a.n_users_evaluated, 3);
        assert!(evaluate(&task, &split_from(&[], 3, 4)).is_err());
    }

    #[test]
    fn ablation_defaults_are_the_identity() {
        let spec = AblationSpec::default();
        assert_eq!(spec.graph_flags(), GraphFlags::default());
        let mut cfg = ModelConfig::default();
        let before = cfg.clone();
        spec.apply_model(&mut cfg);
        assert_eq!(cfg, before);
        assert_eq!(spec.label(), "full");
        let no_att = AblationSpec { attention: false, ..Default::default() };
        assert_eq!(no_att.label(), "no-attention");
    }
}
