//! Higher-order and functional relations over the relatedness measure.
//!
//! A product set's best single substitute can be found two equivalent ways:
//! maximizing the expected relatedness against the set's conditional
//! distribution, or minimizing the KL divergence between that conditional and
//! each candidate's own conditional. Pairwise relations are summarized by a
//! vector of row differences that transports one item's row onto its related
//! counterpart; families of such relations separate under k-means on
//! embedding differences.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::InteractionLog;
use crate::cooccur::{CooccurrenceTable, RelatednessEstimate};
use crate::embed::EmbeddingPair;

/// Additive smoothing applied to candidate conditionals before KL scoring.
pub const DEFAULT_KL_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RelationsError {
    #[error("product set must be non-empty")]
    EmptySet,
    #[error("item {0} appears twice in the set")]
    DuplicateItem(u32),
    #[error("item {0} out of range for {1} items")]
    ItemOutOfRange(u32, usize),
    #[error("empty joint support: no session contains the whole set")]
    EmptyJointSupport,
    #[error("empty support: no session contains any set member")]
    EmptySupport,
    #[error("pair-count tables only condition on singleton sets; got {0} items")]
    SetTooLargeForTable(usize),
    #[error("conditional distribution is degenerate: {0}")]
    InvalidDistribution(String),
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("relation pair ({0}, {0}) relates an item to itself")]
    SelfRelation(u32),
    #[error("duplicate relation pair ({0}, {1})")]
    DuplicatePair(u32, u32),
    #[error("vector length {0} does not match source row length {1}")]
    VectorMismatch(usize, usize),
    #[error("k must be in 1..=num_points; got k={0} for {1} points")]
    BadClusterCount(usize, usize),
}

/// Distinct items treated as one joint context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSet {
    items: Vec<u32>,
}

impl ProductSet {
    pub fn new(mut items: Vec<u32>) -> Result<Self, RelationsError> {
        if items.is_empty() {
            return Err(RelationsError::EmptySet);
        }
        items.sort_unstable();
        for w in items.windows(2) {
            if w[0] == w[1] {
                return Err(RelationsError::DuplicateItem(w[0]));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, item: u32) -> bool {
        self.items.binary_search(&item).is_ok()
    }
}

/// Empirical distribution of items seen alongside a conditioning set.
#[derive(Debug, Clone)]
pub struct ConditionalDistribution {
    probs: Vec<f64>,
    fallback_used: bool,
}

impl ConditionalDistribution {
    /// Normalizes raw weights; total mass must be positive.
    pub fn from_weights(weights: Vec<f64>, fallback_used: bool) -> Result<Self, RelationsError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RelationsError::InvalidDistribution(
                "weights must be non-negative with positive total".into(),
            ));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
            fallback_used,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, item: u32) -> f64 {
        self.probs[item as usize]
    }

    /// Whether the any-of fallback replaced an empty joint support.
    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }
}

/// Singleton conditional from pair counts: `p(e | i) = N_ie / sum_e N_ie`.
pub fn conditional_from_table(
    set: &ProductSet,
    table: &CooccurrenceTable,
) -> Result<ConditionalDistribution, RelationsError> {
    if set.len() != 1 {
        return Err(RelationsError::SetTooLargeForTable(set.len()));
    }
    let i = set.items()[0];
    let items = table.num_items();
    if i as usize >= items {
        return Err(RelationsError::ItemOutOfRange(i, items));
    }
    let mut weights = vec![0.0; items];
    for e in 0..items as u32 {
        if e != i {
            weights[e as usize] = table.pair_count(i, e) as f64;
        }
    }
    ConditionalDistribution::from_weights(weights, false)
        .map_err(|_| RelationsError::EmptySupport)
}

/// Session-based conditional: the frequency of each item in sessions that
/// contain every set member (joint mode). With `allow_fallback`, an empty
/// joint support degrades to sessions containing any member, flagged in the
/// result; otherwise it is an error.
pub fn conditional_from_sessions(
    set: &ProductSet,
    log: &InteractionLog,
    num_items: usize,
    allow_fallback: bool,
) -> Result<ConditionalDistribution, RelationsError> {
    for &i in set.items() {
        if i as usize >= num_items {
            return Err(RelationsError::ItemOutOfRange(i, num_items));
        }
    }
    let count = |require_all: bool| -> Vec<f64> {
        let mut weights = vec![0.0; num_items];
        let mut session_items = BTreeSet::new();
        for session in log.sessions() {
            session_items.clear();
            session_items.extend(session.iter().map(|r| r.item));
            let hit = if require_all {
                set.items().iter().all(|i| session_items.contains(i))
            } else {
                set.items().iter().any(|i| session_items.contains(i))
            };
            if !hit {
                continue;
            }
            for &e in session_items.iter() {
                if !set.contains(e) {
                    weights[e as usize] += 1.0;
                }
            }
        }
        weights
    };

    let joint = count(true);
    if joint.iter().sum::<f64>() > 0.0 {
        return ConditionalDistribution::from_weights(joint, false);
    }
    if !allow_fallback {
        return Err(RelationsError::EmptyJointSupport);
    }
    let any = count(false);
    if any.iter().sum::<f64>() > 0.0 {
        return ConditionalDistribution::from_weights(any, true);
    }
    Err(RelationsError::EmptySupport)
}

fn best_index(scores: &[f64], candidates: &[u32], pick_max: bool) -> u32 {
    let mut best = 0usize;
    for idx in 1..scores.len() {
        let better = if pick_max {
            scores[idx] > scores[best]
        } else {
            scores[idx] < scores[best]
        };
        // Strict comparison keeps the smallest candidate index on ties.
        if better {
            best = idx;
        }
    }
    candidates[best]
}

/// Selects the candidate maximizing the conditional expectation of its
/// relatedness row, `sum_e cond(e) * R(candidate, e)`; missing entries and
/// the diagonal contribute zero. Returns the winner and the per-candidate
/// scores; ties go to the smallest index.
pub fn higher_order_by_relatedness(
    set: &ProductSet,
    est: &RelatednessEstimate,
    cond: &ConditionalDistribution,
    candidates: &[u32],
) -> Result<(u32, Vec<f64>), RelationsError> {
    if candidates.is_empty() {
        return Err(RelationsError::NoCandidates);
    }
    let items = est.num_items();
    if cond.probs().len() != items {
        return Err(RelationsError::VectorMismatch(cond.probs().len(), items));
    }
    for &i in set.items().iter().chain(candidates) {
        if i as usize >= items {
            return Err(RelationsError::ItemOutOfRange(i, items));
        }
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &j in candidates {
        let mut score = 0.0;
        for (e, &p) in cond.probs().iter().enumerate() {
            if p > 0.0 && e as u32 != j {
                score += p * est.value(j, e as u32).unwrap_or(0.0);
            }
        }
        scores.push(score);
    }
    Ok((best_index(&scores, candidates, true), scores))
}

/// Selects the candidate whose own conditional distribution is closest in KL
/// divergence to the set conditional. Candidate conditionals receive
/// additive `epsilon` smoothing; a candidate carrying conditional mass in
/// `cond` scores infinity (its own cell has no conditional probability).
pub fn higher_order_by_kl(
    set: &ProductSet,
    cond: &ConditionalDistribution,
    table: &CooccurrenceTable,
    candidates: &[u32],
    epsilon: f64,
) -> Result<(u32, Vec<f64>), RelationsError> {
    if candidates.is_empty() {
        return Err(RelationsError::NoCandidates);
    }
    let items = table.num_items();
    if cond.probs().len() != items {
        return Err(RelationsError::VectorMismatch(cond.probs().len(), items));
    }
    for &i in set.items().iter().chain(candidates) {
        if i as usize >= items {
            return Err(RelationsError::ItemOutOfRange(i, items));
        }
    }
    let mut divergences = Vec::with_capacity(candidates.len());
    for &j in candidates {
        let mut denom = 0.0;
        for e in 0..items as u32 {
            if e != j {
                denom += table.pair_count(j, e) as f64 + epsilon;
            }
        }
        let mut kl = 0.0;
        for (e, &p) in cond.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            if e as u32 == j {
                kl = f64::INFINITY;
                break;
            }
            let q = (table.pair_count(j, e as u32) as f64 + epsilon) / denom;
            if q == 0.0 {
                kl = f64::INFINITY;
                break;
            }
            kl += p * (p / q).ln();
        }
        divergences.push(kl);
    }
    Ok((best_index(&divergences, candidates, false), divergences))
}

/// Directed pairs `(source, target)` sharing one functional relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSet {
    pairs: Vec<(u32, u32)>,
}

impl RelationSet {
    /// Distinct directed pairs; self-relations and duplicates are rejected.
    pub fn new(pairs: Vec<(u32, u32)>) -> Result<Self, RelationsError> {
        let mut seen = BTreeSet::new();
        for &(i, j) in &pairs {
            if i == j {
                return Err(RelationsError::SelfRelation(i));
            }
            if !seen.insert((i, j)) {
                return Err(RelationsError::DuplicatePair(i, j));
            }
        }
        Ok(Self { pairs })
    }

    /// Multiset variant: duplicates allowed, contributions add up.
    pub fn from_multiset(pairs: Vec<(u32, u32)>) -> Result<Self, RelationsError> {
        for &(i, j) in &pairs {
            if i == j {
                return Err(RelationsError::SelfRelation(i));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Left members (rows subtracted from the relation vector).
    pub fn sources(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs.iter().map(|&(i, _)| i)
    }

    /// Right members (rows added to the relation vector).
    pub fn targets(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs.iter().map(|&(_, j)| j)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Which row space a relation vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSource {
    Relatedness,
    Embedding,
}

/// Rows used to build and apply relation vectors.
#[derive(Debug, Clone, Copy)]
pub enum RowSource<'a> {
    /// Dense relatedness rows of length |I| (missing entries zero).
    Estimate(&'a RelatednessEstimate),
    /// Input-embedding rows of length d.
    Embedding(&'a EmbeddingPair),
}

impl<'a> RowSource<'a> {
    fn row(&self, i: u32) -> Vec<f64> {
        match self {
            RowSource::Estimate(est) => est.dense_row(i),
            RowSource::Embedding(pair) => pair.z.row(i).to_vec(),
        }
    }

    fn row_len(&self) -> usize {
        match self {
            RowSource::Estimate(est) => est.num_items(),
            RowSource::Embedding(pair) => pair.z.dim(),
        }
    }

    fn num_items(&self) -> usize {
        match self {
            RowSource::Estimate(est) => est.num_items(),
            RowSource::Embedding(pair) => pair.z.rows(),
        }
    }

    fn source_tag(&self) -> VectorSource {
        match self {
            RowSource::Estimate(_) => VectorSource::Relatedness,
            RowSource::Embedding(_) => VectorSource::Embedding,
        }
    }
}

/// Sum of row differences `row(target) - row(source)` over the relation's
/// pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationVector {
    values: Vec<f64>,
    source: VectorSource,
}

impl RelationVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> VectorSource {
        self.source
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn relation_vector(
    rel: &RelationSet,
    source: RowSource<'_>,
) -> Result<RelationVector, RelationsError> {
    let items = source.num_items();
    for &(i, j) in rel.pairs() {
        if i as usize >= items || j as usize >= items {
            return Err(RelationsError::ItemOutOfRange(i.max(j), items));
        }
    }
    let mut values = vec![0.0; source.row_len()];
    for &(i, j) in rel.pairs() {
        let plus = source.row(j);
        let minus = source.row(i);
        for c in 0..values.len() {
            values[c] += plus[c] - minus[c];
        }
    }
    Ok(RelationVector {
        values,
        source: source.source_tag(),
    })
}

/// Candidates ranked by how well `row(i_star) + z_r` matches their row:
/// ascending Euclidean distance for relatedness rows, descending cosine for
/// embeddings; ties by item index. `residual` is `row(top) - row(i_star) - z_r`.
#[derive(Debug, Clone)]
pub struct AnalogyOutcome {
    pub ranked: Vec<(u32, f64)>,
    pub residual: Vec<f64>,
}

pub fn analogy_predict(
    i_star: u32,
    z_r: &RelationVector,
    source: RowSource<'_>,
    candidates: &[u32],
) -> Result<AnalogyOutcome, RelationsError> {
    if candidates.is_empty() {
        return Err(RelationsError::NoCandidates);
    }
    let items = source.num_items();
    if i_star as usize >= items {
        return Err(RelationsError::ItemOutOfRange(i_star, items));
    }
    for &j in candidates {
        if j as usize >= items {
            return Err(RelationsError::ItemOutOfRange(j, items));
        }
    }
    if z_r.values().len() != source.row_len() {
        return Err(RelationsError::VectorMismatch(
            z_r.values().len(),
            source.row_len(),
        ));
    }
    let base = source.row(i_star);
    let query: Vec<f64> = base
        .iter()
        .zip(z_r.values())
        .map(|(a, b)| a + b)
        .collect();
    let cosine_mode = matches!(source, RowSource::Embedding(_));
    let mut ranked: Vec<(u32, f64)> = candidates
        .iter()
        .map(|&j| {
            let row = source.row(j);
            let score = if cosine_mode {
                cosine(&query, &row)
            } else {
                query
                    .iter()
                    .zip(&row)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            };
            (j, score)
        })
        .collect();
    if cosine_mode {
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    } else {
        ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    }
    let top_row = source.row(ranked[0].0);
    let residual = top_row
        .iter()
        .zip(&query)
        .map(|(r, q)| r - q)
        .collect();
    Ok(AnalogyOutcome { ranked, residual })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Lloyd's algorithm over embedding differences `z_anchor - z_reco`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KmeansOutcome {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn kmeans_diffs(
    anchor_pairs: &[(u32, u32)],
    pair: &EmbeddingPair,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KmeansOutcome, RelationsError> {
    if k == 0 || k > anchor_pairs.len() {
        return Err(RelationsError::BadClusterCount(k, anchor_pairs.len()));
    }
    let items = pair.z.rows();
    for &(a, r) in anchor_pairs {
        if a as usize >= items || r as usize >= items {
            return Err(RelationsError::ItemOutOfRange(a.max(r), items));
        }
    }
    let dim = pair.z.dim();
    let points: Vec<Vec<f64>> = anchor_pairs
        .iter()
        .map(|&(a, r)| {
            pair.z
                .row(a)
                .iter()
                .zip(pair.z.row(r))
                .map(|(x, y)| x - y)
                .collect()
        })
        .collect();

    let sq_dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (idx, &d) in nearest.iter().enumerate() {
                if u < d {
                    chosen = idx;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (idx, p) in points.iter().enumerate() {
            nearest[idx] = nearest[idx].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assignments = vec![0usize; points.len()];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        // Assignment step; ties keep the lowest cluster index.
        let mut changed = false;
        for (idx, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assignments[idx] != best {
                assignments[idx] = best;
                changed = true;
            }
        }
        // Update step; empty clusters re-seed from the farthest point.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (idx, p) in points.iter().enumerate() {
            counts[assignments[idx]] += 1;
            for c in 0..dim {
                sums[assignments[idx]][c] += p[c];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let farthest = points
                    .iter()
                    .enumerate()
                    .max_by(|(ia, a), (ib, b)| {
                        let da = sq_dist(a, &centroids[assignments[*ia]]);
                        let db = sq_dist(b, &centroids[assignments[*ib]]);
                        da.partial_cmp(&db).unwrap().then(ib.cmp(ia))
                    })
                    .map(|(idx, _)| idx)
                    .unwrap();
                centroids[c] = points[farthest].clone();
                changed = true;
            } else {
                for v in 0..dim {
                    centroids[c][v] = sums[c][v] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let objective = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Ok(KmeansOutcome {
        assignments,
        centroids,
        objective,
        iterations,
    })
}

/// Items `0..n` as a candidate pool.
pub fn all_items(num_items: usize) -> Vec<u32> {
    (0..num_items as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic, Interaction, SyntheticSpec};
    use crate::cooccur::{relatedness, RoleConvention};
    use crate::embed::init_embeddings;
    use approx::assert_abs_diff_eq;

    fn synthetic(num_items: u32, records: u64, seed: u64) -> crate::catalog::SyntheticData {
        generate_synthetic(&SyntheticSpec {
            num_items,
            num_classes: 2,
            within_prob: 0.6,
            cross_prob: 0.2,
            num_records: records,
            planted_independent: vec![],
            pairs_per_user: 1,
            seed,
        })
        .unwrap()
    }

    fn table_of(data: &crate::catalog::SyntheticData, num_items: usize) -> CooccurrenceTable {
        CooccurrenceTable::accumulate(&data.pairs, num_items, RoleConvention::CenterOnly, false)
            .unwrap()
    }

    fn session_log(sessions: &[&[u32]]) -> InteractionLog {
        let mut records = Vec::new();
        for (s, items) in sessions.iter().enumerate() {
            for (p, &item) in items.iter().enumerate() {
                records.push(Interaction {
                    user: 0,
                    session: s as u32,
                    item,
                    position: p as u32,
                });
            }
        }
        InteractionLog::new(records).unwrap()
    }

    #[test]
    fn product_set_validates_membership() {
        assert!(matches!(
            ProductSet::new(vec![]),
            Err(RelationsError::EmptySet)
        ));
        assert!(matches!(
            ProductSet::new(vec![3, 1, 3]),
            Err(RelationsError::DuplicateItem(3))
        ));
        let set = ProductSet::new(vec![4, 1, 2]).unwrap();
        assert_eq!(set.items(), &[1, 2, 4]);
        assert!(set.contains(2));
        assert!(!set.contains(3));
    }

    #[test]
    fn singleton_conditional_matches_pair_ratios() {
        let data = synthetic(6, 20_000, 41);
        let table = table_of(&data, 6);
        let set = ProductSet::new(vec![2]).unwrap();
        let cond = conditional_from_table(&set, &table).unwrap();
        let total: f64 = (0..6u32)
            .filter(|&e| e != 2)
            .map(|e| table.pair_count(2, e) as f64)
            .sum();
        for e in 0..6u32 {
            let expected = if e == 2 {
                0.0
            } else {
                table.pair_count(2, e) as f64 / total
            };
            assert_abs_diff_eq!(cond.prob(e), expected, epsilon = 1e-12);
        }
        assert!(!cond.fallback_used());
    }

    #[test]
    fn singleton_conditional_tracks_the_planted_model() {
        let data = synthetic(8, 200_000, 42);
        let table = table_of(&data, 8);
        let set = ProductSet::new(vec![3]).unwrap();
        let cond = conditional_from_table(&set, &table).unwrap();
        let n3 = table.item_count(3) as f64;
        for e in 0..8u32 {
            if e == 3 {
                continue;
            }
            let truth = data.model.conditional(e, 3);
            let sigma = (truth * (1.0 - truth) / n3).sqrt();
            assert!(
                (cond.prob(e) - truth).abs() <= 3.0 * sigma + 1e-9,
                "item {e}: {} vs {truth} (sigma {sigma})",
                cond.prob(e)
            );
        }
    }

    #[test]
    fn joint_session_conditional_counts_supersets() {
        let log = session_log(&[&[1, 2, 3], &[1, 2, 4], &[1, 5]]);
        let set = ProductSet::new(vec![1, 2]).unwrap();
        let cond = conditional_from_sessions(&set, &log, 6, true).unwrap();
        assert_abs_diff_eq!(cond.prob(3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.prob(4), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.prob(5), 0.0, epsilon = 1e-12);
        assert!(!cond.fallback_used());
    }

    #[test]
    fn empty_joint_support_falls_back_or_errors() {
        let log = session_log(&[&[1, 2, 3], &[1, 2, 4], &[1, 5]]);
        let set = ProductSet::new(vec![2, 5]).unwrap();
        assert!(matches!(
            conditional_from_sessions(&set, &log, 6, false),
            Err(RelationsError::EmptyJointSupport)
        ));
        let cond = conditional_from_sessions(&set, &log, 6, true).unwrap();
        assert!(cond.fallback_used());
        assert_abs_diff_eq!(cond.prob(1), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.prob(3), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.prob(4), 0.2, epsilon = 1e-12);

        let unseen = ProductSet::new(vec![0]).unwrap();
        assert!(matches!(
            conditional_from_sessions(&unseen, &log, 6, true),
            Err(RelationsError::EmptySupport)
        ));
    }

    #[test]
    fn concentrated_conditional_reduces_to_row_argmax() {
        let data = synthetic(8, 60_000, 43);
        let table = table_of(&data, 8);
        let est = relatedness(&table, 0.0, false).unwrap();
        let mut weights = vec![0.0; 8];
        weights[5] = 1.0;
        let cond = ConditionalDistribution::from_weights(weights, false).unwrap();
        let set = ProductSet::new(vec![5]).unwrap();
        let candidates: Vec<u32> = (0..8).filter(|&j| j != 5).collect();
        let (winner, scores) =
            higher_order_by_relatedness(&set, &est, &cond, &candidates).unwrap();
        let brute = candidates
            .iter()
            .copied()
            .max_by(|&a, &b| {
                est.value(a, 5)
                    .unwrap()
                    .partial_cmp(&est.value(b, 5).unwrap())
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(winner, brute);
        assert_eq!(scores.len(), candidates.len());
    }

    #[test]
    fn selection_rules_agree_and_scores_are_affinely_related() {
        // Candidates carry no conditional mass, so both scores are finite and
        // their sum must be constant across candidates (exact duality).
        let data = synthetic(12, 150_000, 44);
        let table = table_of(&data, 12);
        let est = relatedness(&table, 0.0, false).unwrap();
        // Classes split at item 6: condition on class-1 profiles, select among
        // class-0 candidates.
        let candidates: Vec<u32> = (0..6).collect();
        for seed in 0..10u32 {
            let a = 6 + (seed % 6);
            let b = 6 + ((seed + 3) % 6);
            if a == b {
                continue;
            }
            let set = ProductSet::new(vec![a, b]).unwrap();
            let mut weights = vec![0.0; 12];
            for e in 6..12u32 {
                if e != a && e != b {
                    weights[e as usize] = table.pair_count(a, e) as f64
                        + table.pair_count(b, e) as f64;
                }
            }
            let cond = ConditionalDistribution::from_weights(weights, false).unwrap();
            let (by_r, scores) =
                higher_order_by_relatedness(&set, &est, &cond, &candidates).unwrap();
            let (by_kl, divs) =
                higher_order_by_kl(&set, &cond, &table, &candidates, DEFAULT_KL_SMOOTHING)
                    .unwrap();
            assert_eq!(by_r, by_kl, "selectors disagree for set {:?}", set.items());
            let offsets: Vec<f64> = scores.iter().zip(&divs).map(|(s, d)| s + d).collect();
            for w in offsets.windows(2) {
                assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn halved_smoothing_keeps_the_argmin() {
        let data = synthetic(10, 80_000, 45);
        let table = table_of(&data, 10);
        let set = ProductSet::new(vec![7, 8]).unwrap();
        let mut weights = vec![0.0; 10];
        for e in 5..10u32 {
            if e != 7 && e != 8 {
                weights[e as usize] = table.pair_count(7, e) as f64 + 1.0;
            }
        }
        let cond = ConditionalDistribution::from_weights(weights, false).unwrap();
        let candidates: Vec<u32> = (0..5).collect();
        let (a, _) =
            higher_order_by_kl(&set, &cond, &table, &candidates, DEFAULT_KL_SMOOTHING).unwrap();
        let (b, _) = higher_order_by_kl(&set, &cond, &table, &candidates, DEFAULT_KL_SMOOTHING / 2.0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_conditional_scores_zero_kl() {
        // Candidate 0's own conditional used as the set conditional.
        let data = synthetic(8, 40_000, 46);
        let table = table_of(&data, 8);
        let set = ProductSet::new(vec![1]).unwrap();
        let cond =
            conditional_from_table(&ProductSet::new(vec![0]).unwrap(), &table).unwrap();
        let candidates = vec![0u32];
        let (winner, divs) =
            higher_order_by_kl(&set, &cond, &table, &candidates, DEFAULT_KL_SMOOTHING).unwrap();
        assert_eq!(winner, 0);
        assert!(divs[0].abs() < 1e-6, "kl = {}", divs[0]);
    }

    #[test]
    fn relation_vector_is_linear_in_pairs() {
        let data = synthetic(8, 30_000, 47);
        let table = table_of(&data, 8);
        let est = relatedness(&table, 0.0, false).unwrap();

        let empty = RelationSet::new(vec![]).unwrap();
        let zero = relation_vector(&empty, RowSource::Estimate(&est)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let single = RelationSet::new(vec![(2, 5)]).unwrap();
        let v1 = relation_vector(&single, RowSource::Estimate(&est)).unwrap();
        let expected: Vec<f64> = est
            .dense_row(5)
            .iter()
            .zip(est.dense_row(2).iter())
            .map(|(a, b)| a - b)
            .collect();
        assert_eq!(v1.values(), expected.as_slice());

        let double = RelationSet::from_multiset(vec![(2, 5), (2, 5)]).unwrap();
        let v2 = relation_vector(&double, RowSource::Estimate(&est)).unwrap();
        for (a, b) in v1.values().iter().zip(v2.values()) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }

        let pair = init_embeddings(8, 4, 3);
        let v_emb = relation_vector(&single, RowSource::Embedding(&pair)).unwrap();
        assert_eq!(v_emb.values().len(), 4);
        assert_eq!(v_emb.source(), VectorSource::Embedding);
    }

    #[test]
    fn relation_set_rejects_degenerate_pairs() {
        assert!(matches!(
            RelationSet::new(vec![(1, 1)]),
            Err(RelationsError::SelfRelation(1))
        ));
        assert!(matches!(
            RelationSet::new(vec![(1, 2), (1, 2)]),
            Err(RelationsError::DuplicatePair(1, 2))
        ));
    }

    #[test]
    fn zero_relation_vector_reduces_to_nearest_neighbor() {
        let data = synthetic(10, 60_000, 48);
        let table = table_of(&data, 10);
        let est = relatedness(&table, 0.0, false).unwrap();
        let zero = relation_vector(
            &RelationSet::new(vec![]).unwrap(),
            RowSource::Estimate(&est),
        )
        .unwrap();
        let candidates: Vec<u32> = (0..10).filter(|&j| j != 4).collect();
        let outcome =
            analogy_predict(4, &zero, RowSource::Estimate(&est), &candidates).unwrap();
        // Brute-force nearest row to row(4).
        let base = est.dense_row(4);
        let brute = candidates
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da: f64 = est
                    .dense_row(a)
                    .iter()
                    .zip(&base)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                let db: f64 = est
                    .dense_row(b)
                    .iter()
                    .zip(&base)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(outcome.ranked[0].0, brute);
        // Residual of the top hit reported against the query.
        assert_eq!(outcome.residual.len(), 10);
    }

    #[test]
    fn analogy_ranking_is_invariant_to_constant_row_shifts() {
        // Adding the same vector c to every relatedness row leaves the
        // relation vector and all query-candidate differences unchanged.
        // Rows carry a structural zero on the diagonal (an item's
        // relatedness to itself is not data), so c must vanish on the
        // coordinates where those zeros enter the computation: the queried
        // item, the candidates, and the relation-pair endpoints. Everywhere
        // else c is arbitrary.
        let data = synthetic(12, 80_000, 49);
        let table = table_of(&data, 12);
        let est = relatedness(&table, 0.0, false).unwrap();
        assert_eq!(est.len(), 12 * 11, "estimate must be fully observed");
        let rel = RelationSet::new(vec![(0, 1), (2, 3)]).unwrap();
        let z_r = relation_vector(&rel, RowSource::Estimate(&est)).unwrap();
        let candidates: Vec<u32> = vec![8, 9, 10, 11];
        let before = analogy_predict(5, &z_r, RowSource::Estimate(&est), &candidates).unwrap();

        let mut shift = vec![0.0; 12];
        shift[4] = 2.5;
        shift[6] = -1.0;
        shift[7] = 0.7;
        let shifted_est = {
            let values = est
                .iter()
                .map(|((i, j), v)| ((i, j), v + shift[j as usize]))
                .collect();
            RelatednessEstimate::from_values(12, values, false).unwrap()
        };
        let z_r_shifted = relation_vector(&rel, RowSource::Estimate(&shifted_est)).unwrap();
        for (a, b) in z_r_shifted.values().iter().zip(z_r.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let after =
            analogy_predict(5, &z_r_shifted, RowSource::Estimate(&shifted_est), &candidates)
                .unwrap();
        let order_before: Vec<u32> = before.ranked.iter().map(|&(j, _)| j).collect();
        let order_after: Vec<u32> = after.ranked.iter().map(|&(j, _)| j).collect();
        assert_eq!(order_before, order_after);
        for (a, b) in before.ranked.iter().zip(&after.ranked) {
            assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn kmeans_single_cluster_is_the_mean() {
        let pair = init_embeddings(6, 3, 5);
        let diffs = [(0u32, 1u32), (2, 3), (4, 5)];
        let outcome = kmeans_diffs(&diffs, &pair, 1, 7, 50).unwrap();
        assert_eq!(outcome.assignments, vec![0, 0, 0]);
        for c in 0..3 {
            let mean: f64 = diffs
                .iter()
                .map(|&(a, r)| pair.z.row(a)[c] - pair.z.row(r)[c])
                .sum::<f64>()
                / 3.0;
            assert_abs_diff_eq!(outcome.centroids[0][c], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn kmeans_recovers_separated_families() {
        // Build embeddings whose difference vectors fall into two tight,
        // well-separated families.
        let dim = 4;
        let mut data = vec![0.0; 20 * dim];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for idx in 0..10 {
            let anchor = 2 * idx;
            let reco = 2 * idx + 1;
            let family = idx % 2;
            for c in 0..dim {
                let base: f64 = rng.random::<f64>();
                data[reco * dim + c] = base;
                let offset = if family == 0 {
                    [5.0, 0.0, 0.0, 0.0][c]
                } else {
                    [0.0, 5.0, 0.0, 0.0][c]
                };
                data[anchor * dim + c] = base + offset + 0.01 * rng.random::<f64>();
            }
        }
        let emb = crate::embed::Embedding::from_data(20, dim, data);
        let pair = EmbeddingPair {
            z: emb.clone(),
            zt: emb,
        };
        let diffs: Vec<(u32, u32)> = (0..10).map(|i| (2 * i as u32, 2 * i as u32 + 1)).collect();
        let outcome = kmeans_diffs(&diffs, &pair, 2, 13, 100).unwrap();
        // Perfect split by family.
        for idx in 0..10 {
            assert_eq!(
                outcome.assignments[idx] == outcome.assignments[0],
                idx % 2 == 0,
                "assignments {:?}",
                outcome.assignments
            );
        }

        // Duplicating every point must not move the centroids.
        let mut doubled = diffs.clone();
        doubled.extend(diffs.iter().copied());
        let twice = kmeans_diffs(&doubled, &pair, 2, 13, 100).unwrap();
        let mut got: Vec<Vec<f64>> = twice.centroids.clone();
        let mut want: Vec<Vec<f64>> = outcome.centroids.clone();
        let key = |v: &Vec<f64>| (v[0] * 1e6) as i64;
        got.sort_by_key(key);
        want.sort_by_key(key);
        for (a, b) in got.iter().zip(&want) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn kmeans_objective_is_monotone_under_lloyd() {
        let pair = init_embeddings(30, 5, 17);
        let diffs: Vec<(u32, u32)> = (0..15).map(|i| (i as u32, (i + 15) as u32)).collect();
        let mut previous = f64::INFINITY;
        for iters in 1..6 {
            let outcome = kmeans_diffs(&diffs, &pair, 3, 23, iters).unwrap();
            assert!(outcome.objective <= previous + 1e-12);
            previous = outcome.objective;
        }
    }

    #[test]
    fn kmeans_validates_cluster_count() {
        let pair = init_embeddings(4, 2, 1);
        let diffs = [(0u32, 1u32), (2, 3)];
        assert!(matches!(
            kmeans_diffs(&diffs, &pair, 0, 1, 10),
            Err(RelationsError::BadClusterCount(0, 2))
        ));
        assert!(matches!(
            kmeans_diffs(&diffs, &pair, 3, 1, 10),
            Err(RelationsError::BadClusterCount(3, 2))
        ));
    }
}
