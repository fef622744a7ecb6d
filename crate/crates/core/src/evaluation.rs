//! Downstream evaluation protocol: leave-last-out next-item ranking,
//! softmax classification with micro/macro F1, and shopping-cart
//! composition strategies.
//!
//! All randomness is seeded; per-user and per-cart work is read-only over
//! the embeddings, and reductions run in a fixed (index) order so results
//! are reproducible bit-for-bit.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{splitmix64, InteractionLog, SyntheticModel};
use crate::embed::{dot, EmbeddingPair};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ranking requires at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("rank position {position} out of range 1..={count}")]
    PositionOutOfRange { position: usize, count: usize },
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("classification requires at least 2 distinct classes")]
    TooFewClasses,
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("cart must contain at least one item")]
    EmptyCart,
    #[error("cart label {0} must not already be in the cart")]
    LabelInCart(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

// ---------------------------------------------------------------------------
// Leave-last-out splitting
// ---------------------------------------------------------------------------

/// One user's split: training prefix, validation item (second-to-last),
/// test item (last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub user: u32,
    pub train: Vec<u32>,
    pub valid: u32,
    pub test: u32,
}

/// Deterministic per-user split; users with fewer than three records are
/// excluded and counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub users: Vec<UserSplit>,
    pub excluded_users: usize,
}

impl SplitSpec {
    /// Total records covered by the included users.
    pub fn included_records(&self) -> usize {
        self.users.iter().map(|u| u.train.len() + 2).sum()
    }
}

/// Holds out each user's last interaction for testing and the
/// second-to-last for validation; everything earlier is training history.
pub fn leave_last_split(log: &InteractionLog) -> SplitSpec {
    let mut users = Vec::new();
    let mut excluded = 0usize;
    for (user, records) in log.users() {
        if records.len() < 3 {
            excluded += 1;
            continue;
        }
        let items: Vec<u32> = records.iter().map(|r| r.item).collect();
        let test = items[items.len() - 1];
        let valid = items[items.len() - 2];
        let train = items[..items.len() - 2].to_vec();
        users.push(UserSplit {
            user,
            train,
            valid,
            test,
        });
    }
    SplitSpec {
        users,
        excluded_users: excluded,
    }
}

// ---------------------------------------------------------------------------
// Ranking and ranking metrics
// ---------------------------------------------------------------------------

/// Ranks every non-excluded item by the inner product between `query` and
/// the item's input-side embedding row, descending; ties break by item
/// index. Composed queries (sums, attention mixtures of rows) use the same
/// convention by linearity.
pub fn rank_candidates(query: &[f64], pair: &EmbeddingPair, exclude: &BTreeSet<u32>) -> Vec<u32> {
    assert_eq!(
        query.len(),
        pair.z.dim(),
        "query dimension must match the embedding dimension"
    );
    let mut scored: Vec<(f64, u32)> = (0..pair.z.rows() as u32)
        .filter(|j| !exclude.contains(j))
        .map(|j| (dot(query, pair.z.row(j)), j))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, j)| j).collect()
}

/// 1-based rank of `target` under the same ordering as [`rank_candidates`],
/// along with the candidate count, computed by counting rather than sorting.
fn rank_of(
    target: u32,
    query: &[f64],
    pair: &EmbeddingPair,
    exclude: &BTreeSet<u32>,
) -> (usize, usize) {
    assert_eq!(query.len(), pair.z.dim());
    debug_assert!(!exclude.contains(&target));
    let target_score = dot(query, pair.z.row(target));
    let mut ahead = 0usize;
    let mut count = 0usize;
    for j in 0..pair.z.rows() as u32 {
        if exclude.contains(&j) {
            continue;
        }
        count += 1;
        if j == target {
            continue;
        }
        let s = dot(query, pair.z.row(j));
        if s > target_score || (s == target_score && j < target) {
            ahead += 1;
        }
    }
    (ahead + 1, count)
}

/// Metrics for a single query whose positive lands at `position` (1-based)
/// among `count` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub auc: f64,
    pub ndcg: f64,
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
}

/// AUC = (count − position)/(count − 1); NDCG = 1/log₂(1 + position);
/// recall@k = 1 if the positive is in the top k; ndcg@k gates NDCG the same
/// way.
pub fn ranking_metrics(position: usize, count: usize, k: usize) -> Result<RankingMetrics, EvalError> {
    if position < 1 || position > count {
        return Err(EvalError::PositionOutOfRange { position, count });
    }
    if count < 2 {
        return Err(EvalError::TooFewCandidates(count));
    }
    let ndcg = 1.0 / (1.0 + position as f64).log2();
    let hit = position <= k;
    Ok(RankingMetrics {
        auc: (count - position) as f64 / (count - 1) as f64,
        ndcg,
        recall_at_k: if hit { 1.0 } else { 0.0 },
        ndcg_at_k: if hit { ndcg } else { 0.0 },
    })
}

/// Mean and standard deviation over repetitions (sample standard deviation;
/// zero for a single run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 1, "summary needs at least one value");
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt()
        };
        Self { mean, std }
    }
}

/// Ranking metrics aggregated over seeded repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub auc: Summary,
    pub ndcg_full: Summary,
    pub recall_at_k: Summary,
    pub ndcg_at_k: Summary,
    pub k: usize,
    pub repetitions: usize,
}

impl RankingReport {
    pub fn from_runs(runs: &[RankingMetrics], k: usize) -> Result<Self, EvalError> {
        if runs.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let collect = |f: fn(&RankingMetrics) -> f64| {
            Summary::from_values(&runs.iter().map(f).collect::<Vec<_>>())
        };
        Ok(Self {
            auc: collect(|m| m.auc),
            ndcg_full: collect(|m| m.ndcg),
            recall_at_k: collect(|m| m.recall_at_k),
            ndcg_at_k: collect(|m| m.ndcg_at_k),
            k,
            repetitions: runs.len(),
        })
    }
}

/// Candidate-set convention for next-item ranking. The full catalog (minus
/// the user's known history) is the strictest; the sampled mode draws a
/// fixed number of negatives per user for speed and is labeled as such in
/// reports since absolute numbers differ between conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    FullCatalog,
    SampledNegatives(usize),
}

pub const DEFAULT_SAMPLED_NEGATIVES: usize = 100;

/// One evaluation pass over a split: per-user metrics averaged in user
/// order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommendationRun {
    pub metrics: RankingMetrics,
    pub users_evaluated: usize,
}

/// Scores each user's test item with the most recent known item (the
/// validation item) as the query. The candidate pool always contains the
/// positive exactly once: known history is excluded except when it equals
/// the test item itself.
pub fn evaluate_recommendation(
    split: &SplitSpec,
    pair: &EmbeddingPair,
    mode: CandidateMode,
    k: usize,
    seed: u64,
) -> Result<RecommendationRun, EvalError> {
    if split.users.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let num_items = pair.z.rows() as u32;
    let mut totals = [0.0f64; 4];
    for user in &split.users {
        let mut exclude: BTreeSet<u32> = user.train.iter().copied().collect();
        exclude.insert(user.valid);
        exclude.remove(&user.test);
        let query = pair.z.row(user.valid);
        let (position, count) = match mode {
            CandidateMode::FullCatalog => rank_of(user.test, query, pair, &exclude),
            CandidateMode::SampledNegatives(m) => {
                let mut pool: Vec<u32> = (0..num_items)
                    .filter(|j| *j != user.test && !exclude.contains(j))
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
                    seed ^ (user.user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ));
                let take = m.min(pool.len());
                for idx in 0..take {
                    let swap = rng.random_range(idx..pool.len());
                    pool.swap(idx, swap);
                }
                pool.truncate(take);
                let target_score = dot(query, pair.z.row(user.test));
                let mut ahead = 0usize;
                for &j in &pool {
                    let s = dot(query, pair.z.row(j));
                    if s > target_score || (s == target_score && j < user.test) {
                        ahead += 1;
                    }
                }
                (ahead + 1, take + 1)
            }
        };
        let m = ranking_metrics(position, count, k)?;
        totals[0] += m.auc;
        totals[1] += m.ndcg;
        totals[2] += m.recall_at_k;
        totals[3] += m.ndcg_at_k;
    }
    let n = split.users.len() as f64;
    Ok(RecommendationRun {
        metrics: RankingMetrics {
            auc: totals[0] / n,
            ndcg: totals[1] / n,
            recall_at_k: totals[2] / n,
            ndcg_at_k: totals[3] / n,
        },
        users_evaluated: split.users.len(),
    })
}

// ---------------------------------------------------------------------------
// Softmax classification
// ---------------------------------------------------------------------------

/// Linear multi-class classifier: class scores are `row · Θ` (no intercept),
/// probabilities are the softmax of the scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftmaxClassifier {
    /// Row-major `dim × num_classes` weight matrix.
    theta: Vec<f64>,
    dim: usize,
    num_classes: usize,
}

impl SoftmaxClassifier {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.dim);
        let mut out = vec![0.0; self.num_classes];
        for (f, &x) in row.iter().enumerate() {
            let weights = &self.theta[f * self.num_classes..(f + 1) * self.num_classes];
            for (o, &w) in out.iter_mut().zip(weights) {
                *o += x * w;
            }
        }
        out
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut logits = self.logits(row);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in logits.iter_mut() {
            *l /= total;
        }
        logits
    }

    /// Arg-max class; ties go to the smallest class index.
    pub fn predict(&self, row: &[f64]) -> u32 {
        let logits = self.logits(row);
        let mut best = 0usize;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        best as u32
    }
}

/// Training outcome: fitted weights, the per-epoch loss trace (cross-entropy
/// plus L2, length `epochs + 1` including the initial state), the seeded
/// stratified split, and held-out metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub classifier: SoftmaxClassifier,
    pub loss_trace: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub test_predictions: Vec<u32>,
    pub test_accuracy: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
}

/// Cross-entropy loss and gradient of the linear softmax model over the
/// given example subset, with an L2 penalty of `l2/2 · ‖Θ‖²`.
fn softmax_loss_grad(
    rows: &crate::embed::Embedding,
    indices: &[usize],
    labels: &[u32],
    theta: &[f64],
    l2: f64,
    num_classes: usize,
) -> (f64, Vec<f64>) {
    let n = indices.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for &i in indices {
        let row = rows.row(i as u32);
        let mut logits = vec![0.0; num_classes];
        for (f, &x) in row.iter().enumerate() {
            let weights = &theta[f * num_classes..(f + 1) * num_classes];
            for (l, &w) in logits.iter_mut().zip(weights) {
                *l += x * w;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let y = labels[i] as usize;
        loss += log_norm - logits[y];
        for c in 0..num_classes {
            let p = (logits[c] - log_norm).exp();
            let err = p - if c == y { 1.0 } else { 0.0 };
            for (f, &x) in row.iter().enumerate() {
                grad[f * num_classes + c] += err * x / n;
            }
        }
    }
    loss /= n;
    for (g, &t) in grad.iter_mut().zip(theta) {
        *g += l2 * t;
    }
    loss += 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>();
    (loss, grad)
}

/// Seeded stratified split: within each class the indices are shuffled and
/// 80% (at least one) go to training.
fn stratified_split(labels: &[u32], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64 * 0.8).floor() as usize).max(1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Trains the linear softmax classifier with full-batch gradient descent on
/// the seeded stratified 80% training split and evaluates on the held-out
/// 20%. Training aborts with an error if the loss leaves the finite range.
pub fn train_softmax_classifier(
    rows: &crate::embed::Embedding,
    labels: &[u32],
    l2: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ClassifierReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if rows.rows() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: rows.rows(),
            right: labels.len(),
        });
    }
    let distinct: BTreeSet<u32> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(EvalError::TooFewClasses);
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(EvalError::InvalidParameter(format!(
            "learning rate must be positive and finite, got {lr}"
        )));
    }
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(EvalError::InvalidParameter(format!(
            "l2 penalty must be non-negative and finite, got {l2}"
        )));
    }
    let num_classes = (*distinct.iter().next_back().unwrap() + 1) as usize;
    let dim = rows.dim();
    let (train_indices, test_indices) = stratified_split(labels, seed);

    let mut theta = vec![0.0; dim * num_classes];
    let mut loss_trace = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let (loss, grad) = softmax_loss_grad(rows, &train_indices, labels, &theta, l2, num_classes);
        if !loss.is_finite() {
            return Err(EvalError::Diverged(epoch));
        }
        loss_trace.push(loss);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= lr * g;
        }
    }
    let (final_loss, _) = softmax_loss_grad(rows, &train_indices, labels, &theta, l2, num_classes);
    if !final_loss.is_finite() {
        return Err(EvalError::Diverged(epochs));
    }
    loss_trace.push(final_loss);

    let classifier = SoftmaxClassifier {
        theta,
        dim,
        num_classes,
    };
    let test_predictions: Vec<u32> = test_indices
        .iter()
        .map(|&i| classifier.predict(rows.row(i as u32)))
        .collect();
    let test_labels: Vec<u32> = test_indices.iter().map(|&i| labels[i]).collect();
    let (test_accuracy, test_micro_f1, test_macro_f1) = if test_labels.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let correct = test_predictions
            .iter()
            .zip(&test_labels)
            .filter(|(p, y)| p == y)
            .count();
        let (micro, macro_) = f1_scores(&test_predictions, &test_labels)?;
        (correct as f64 / test_labels.len() as f64, micro, macro_)
    };
    Ok(ClassifierReport {
        classifier,
        loss_trace,
        train_indices,
        test_indices,
        test_predictions,
        test_accuracy,
        test_micro_f1,
        test_macro_f1,
    })
}

/// Micro and macro F1 for single-label multi-class predictions. Micro F1
/// pools true/false positives globally (equal to accuracy here); macro F1
/// averages per-class F1 uniformly over every class appearing in either
/// argument, counting classes with an empty F1 denominator as 0.
pub fn f1_scores(predictions: &[u32], labels: &[u32]) -> Result<(f64, f64), EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let classes: BTreeSet<u32> = labels.iter().chain(predictions).copied().collect();
    let mut tp: BTreeMap<u32, usize> = BTreeMap::new();
    let mut fp: BTreeMap<u32, usize> = BTreeMap::new();
    let mut fnn: BTreeMap<u32, usize> = BTreeMap::new();
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            *tp.entry(y).or_insert(0) += 1;
        } else {
            *fp.entry(p).or_insert(0) += 1;
            *fnn.entry(y).or_insert(0) += 1;
        }
    }
    let (mut tp_total, mut fp_total, mut fn_total) = (0usize, 0usize, 0usize);
    let mut macro_sum = 0.0;
    for &c in &classes {
        let t = *tp.get(&c).unwrap_or(&0);
        let f_pos = *fp.get(&c).unwrap_or(&0);
        let f_neg = *fnn.get(&c).unwrap_or(&0);
        tp_total += t;
        fp_total += f_pos;
        fn_total += f_neg;
        let denom = 2 * t + f_pos + f_neg;
        macro_sum += if denom == 0 {
            0.0
        } else {
            2.0 * t as f64 / denom as f64
        };
    }
    let micro_denom = 2 * tp_total + fp_total + fn_total;
    let micro = if micro_denom == 0 {
        0.0
    } else {
        2.0 * tp_total as f64 / micro_denom as f64
    };
    Ok((micro, macro_sum / classes.len() as f64))
}

// ---------------------------------------------------------------------------
// Cart composition
// ---------------------------------------------------------------------------

/// A shopping-cart snapshot: items in add order plus the next purchased item
/// (the label), which is never already in the cart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartSnapshot {
    items: Vec<u32>,
    label: u32,
}

impl CartSnapshot {
    pub fn new(items: Vec<u32>, label: u32) -> Result<Self, EvalError> {
        if items.is_empty() {
            return Err(EvalError::EmptyCart);
        }
        if items.contains(&label) {
            return Err(EvalError::LabelInCart(label));
        }
        Ok(Self { items, label })
    }

    /// Cart contents ordered by add time (last element is the most recent).
    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn label(&self) -> u32 {
        self.label
    }
}

/// How to compose a single query vector from a cart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CartStrategy {
    /// A seeded uniformly random cart item's embedding.
    Random { seed: u64 },
    /// The most recently added item's embedding.
    Recent,
    /// The cart item whose embedding ranks the label best in retrospect
    /// (requires the label, which the snapshot carries).
    Oracle,
    /// The sum of all cart item embeddings.
    Add,
    /// Dot-product self-attention: weights a_m = softmax over m of
    /// Σ_{m'} ⟨z_m, z_{m'}⟩ / √d, output Σ a_m z_m.
    Attention,
}

/// Composes the cart into one query vector over input-side embedding rows.
pub fn cart_embedding(
    cart: &CartSnapshot,
    pair: &EmbeddingPair,
    strategy: CartStrategy,
) -> Vec<f64> {
    let z = &pair.z;
    match strategy {
        CartStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = rng.random_range(0..cart.items.len());
            z.row(cart.items[idx]).to_vec()
        }
        CartStrategy::Recent => z.row(*cart.items.last().unwrap()).to_vec(),
        CartStrategy::Oracle => {
            let exclude: BTreeSet<u32> = cart.items.iter().copied().collect();
            let mut best_item = cart.items[0];
            let mut best_rank = usize::MAX;
            for &m in &cart.items {
                let (rank, _) = rank_of(cart.label, z.row(m), pair, &exclude);
                if rank < best_rank {
                    best_rank = rank;
                    best_item = m;
                }
            }
            z.row(best_item).to_vec()
        }
        CartStrategy::Add => {
            let mut out = vec![0.0; z.dim()];
            for &m in &cart.items {
                for (o, &v) in out.iter_mut().zip(z.row(m)) {
                    *o += v;
                }
            }
            out
        }
        CartStrategy::Attention => {
            let scale = (z.dim() as f64).sqrt();
            let scores: Vec<f64> = cart
                .items
                .iter()
                .map(|&m| {
                    cart.items
                        .iter()
                        .map(|&m2| dot(z.row(m), z.row(m2)))
                        .sum::<f64>()
                        / scale
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut out = vec![0.0; z.dim()];
            for (&m, w) in cart.items.iter().zip(&weights) {
                for (o, &v) in out.iter_mut().zip(z.row(m)) {
                    *o += (w / total) * v;
                }
            }
            out
        }
    }
}

/// Ranks each cart's label against the full catalog minus the cart contents
/// and averages the metrics. The random strategy re-seeds per cart from its
/// base seed so carts draw independently.
pub fn evaluate_cart_strategy(
    carts: &[CartSnapshot],
    pair: &EmbeddingPair,
    strategy: CartStrategy,
    k: usize,
) -> Result<RankingMetrics, EvalError> {
    if carts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut totals = [0.0f64; 4];
    for (idx, cart) in carts.iter().enumerate() {
        let per_cart = match strategy {
            CartStrategy::Random { seed } => CartStrategy::Random {
                seed: splitmix64(seed ^ idx as u64),
            },
            other => other,
        };
        let query = cart_embedding(cart, pair, per_cart);
        let exclude: BTreeSet<u32> = cart.items.iter().copied().collect();
        let (position, count) = rank_of(cart.label, &query, pair, &exclude);
        let m = ranking_metrics(position, count, k)?;
        totals[0] += m.auc;
        totals[1] += m.ndcg;
        totals[2] += m.recall_at_k;
        totals[3] += m.ndcg_at_k;
    }
    let n = carts.len() as f64;
    Ok(RankingMetrics {
        auc: totals[0] / n,
        ndcg: totals[1] / n,
        recall_at_k: totals[2] / n,
        ndcg_at_k: totals[3] / n,
    })
}

/// Parameters for planted cart snapshots drawn from a synthetic model's
/// class structure: each cart holds `noise_items` draws from other classes
/// (added first) followed by `in_class_items` draws from the label's class,
/// so the most recent item is always informative while the cart as a whole
/// mixes signal with noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartGenSpec {
    pub carts: usize,
    pub in_class_items: usize,
    pub noise_items: usize,
    pub seed: u64,
}

/// Draws planted cart snapshots from the synthetic class structure.
pub fn generate_cart_snapshots(
    model: &SyntheticModel,
    spec: &CartGenSpec,
) -> Result<Vec<CartSnapshot>, EvalError> {
    if spec.carts == 0 {
        return Err(EvalError::InvalidParameter("carts must be positive".into()));
    }
    if spec.in_class_items == 0 {
        return Err(EvalError::InvalidParameter(
            "each cart needs at least one item from the label's class".into(),
        ));
    }
    let num_items = model.num_items() as u32;
    let mut by_class: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for i in 0..num_items {
        by_class.entry(model.class_of(i)).or_default().push(i);
    }
    let eligible: Vec<u32> = by_class
        .iter()
        .filter(|(_, members)| members.len() > spec.in_class_items)
        .map(|(&c, _)| c)
        .collect();
    if eligible.is_empty() {
        return Err(EvalError::InvalidParameter(format!(
            "no class has more than {} members",
            spec.in_class_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sample_distinct = |pool: &mut Vec<u32>, m: usize, rng: &mut ChaCha8Rng| {
        let take = m.min(pool.len());
        for idx in 0..take {
            let swap = rng.random_range(idx..pool.len());
            pool.swap(idx, swap);
        }
        pool[..take].to_vec()
    };
    let mut carts = Vec::with_capacity(spec.carts);
    for _ in 0..spec.carts {
        let class = eligible[rng.random_range(0..eligible.len())];
        let mut members = by_class[&class].clone();
        let picks = sample_distinct(&mut members, spec.in_class_items + 1, &mut rng);
        let label = picks[0];
        let in_items = picks[1..].to_vec();
        let mut other: Vec<u32> = (0..num_items)
            .filter(|&i| model.class_of(i) != class)
            .collect();
        if other.len() < spec.noise_items {
            return Err(EvalError::InvalidParameter(format!(
                "only {} items outside class {class}, need {}",
                other.len(),
                spec.noise_items
            )));
        }
        let noise = sample_distinct(&mut other, spec.noise_items, &mut rng);
        let mut items = noise;
        items.extend_from_slice(&in_items);
        carts.push(CartSnapshot::new(items, label)?);
    }
    Ok(carts)
}
