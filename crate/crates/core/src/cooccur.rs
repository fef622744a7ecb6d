//! Co-occurrence counting and the log relatedness estimate
//! `R = log(n * N_ij / (N_i * N_j))`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::catalog::{PairStream, TruthMatrix};

#[derive(Debug, Error)]
pub enum CooccurError {
    #[error("table is empty")]
    EmptyTable,
    #[error("tables disagree on {0}")]
    MergeMismatch(&'static str),
    #[error("item {0} out of range for {1} items")]
    ItemOutOfRange(u32, usize),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("observed pair ({0}, {1}) has a zero marginal count under the declared role convention")]
    ZeroMarginal(u32, u32),
    #[error("diagonal pair ({0}, {0}) is not a valid relatedness cell")]
    DiagonalPair(u32),
    #[error("value at ({0}, {1}) is not finite")]
    NonFiniteValue(u32, u32),
}

/// Which pair role contributes to the item marginal counts.
///
/// `CenterOnly` counts each pair once (sum of N_i equals n) and makes the
/// relatedness estimate consistent with pointwise mutual information on
/// directional streams; `BothRoles` counts participation (sum equals 2n).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleConvention {
    CenterOnly,
    BothRoles,
}

/// Sparse pair counts plus item marginals under a declared role convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    n: u64,
    item_counts: Vec<u64>,
    pair_counts: BTreeMap<(u32, u32), u64>,
    symmetric: bool,
    convention: RoleConvention,
}

impl CooccurrenceTable {
    /// Counts the stream. With `symmetric` the pair key is (min, max) and a
    /// lookup serves both orientations.
    pub fn accumulate(
        stream: &PairStream,
        num_items: usize,
        convention: RoleConvention,
        symmetric: bool,
    ) -> Result<Self, CooccurError> {
        let mut table = Self {
            n: 0,
            item_counts: vec![0; num_items],
            pair_counts: BTreeMap::new(),
            symmetric,
            convention,
        };
        table.consume(stream)?;
        Ok(table)
    }

    /// Shards the stream into contiguous chunks counted on separate threads
    /// and merged in order; counts are integers, so the result is identical
    /// for every shard count.
    pub fn accumulate_sharded(
        stream: &PairStream,
        num_items: usize,
        convention: RoleConvention,
        symmetric: bool,
        shards: usize,
    ) -> Result<Self, CooccurError> {
        let shards = shards.max(1);
        let pairs = stream.pairs();
        if shards == 1 || pairs.len() < 2 * shards {
            return Self::accumulate(stream, num_items, convention, symmetric);
        }
        let chunk = pairs.len().div_ceil(shards);
        let partials: Vec<Result<Self, CooccurError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = pairs
                .chunks(chunk)
                .map(|slice| {
                    scope.spawn(move || {
                        let mut part = Self {
                            n: 0,
                            item_counts: vec![0; num_items],
                            pair_counts: BTreeMap::new(),
                            symmetric,
                            convention,
                        };
                        part.consume_pairs(slice)?;
                        Ok(part)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut iter = partials.into_iter();
        let mut merged = iter.next().unwrap()?;
        for part in iter {
            merged = merged.merge(&part?)?;
        }
        Ok(merged)
    }

    fn consume(&mut self, stream: &PairStream) -> Result<(), CooccurError> {
        self.consume_pairs(stream.pairs())
    }

    fn consume_pairs(&mut self, pairs: &[(u32, u32)]) -> Result<(), CooccurError> {
        let num_items = self.item_counts.len();
        for &(center, context) in pairs {
            for id in [center, context] {
                if id as usize >= num_items {
                    return Err(CooccurError::ItemOutOfRange(id, num_items));
                }
            }
            self.n += 1;
            *self.pair_counts.entry(self.key(center, context)).or_insert(0) += 1;
            self.item_counts[center as usize] += 1;
            if matches!(self.convention, RoleConvention::BothRoles) {
                self.item_counts[context as usize] += 1;
            }
        }
        Ok(())
    }

    fn key(&self, i: u32, j: u32) -> (u32, u32) {
        if self.symmetric {
            (i.min(j), i.max(j))
        } else {
            (i, j)
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_items(&self) -> usize {
        self.item_counts.len()
    }

    pub fn item_count(&self, i: u32) -> u64 {
        self.item_counts[i as usize]
    }

    pub fn item_counts(&self) -> &[u64] {
        &self.item_counts
    }

    pub fn pair_count(&self, i: u32, j: u32) -> u64 {
        self.pair_counts.get(&self.key(i, j)).copied().unwrap_or(0)
    }

    /// Stored (key, count) entries; keys are (min, max) when symmetric.
    pub fn pairs(&self) -> impl Iterator<Item = ((u32, u32), u64)> + '_ {
        self.pair_counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_stored_pairs(&self) -> usize {
        self.pair_counts.len()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn convention(&self) -> RoleConvention {
        self.convention
    }

    /// Adds two tables over the same catalog and conventions.
    pub fn merge(&self, other: &Self) -> Result<Self, CooccurError> {
        if self.convention != other.convention {
            return Err(CooccurError::MergeMismatch("role convention"));
        }
        if self.symmetric != other.symmetric {
            return Err(CooccurError::MergeMismatch("symmetry"));
        }
        if self.item_counts.len() != other.item_counts.len() {
            return Err(CooccurError::MergeMismatch("catalog size"));
        }
        let mut merged = self.clone();
        merged.n += other.n;
        for (count, &add) in merged.item_counts.iter_mut().zip(&other.item_counts) {
            *count += add;
        }
        for (&key, &add) in &other.pair_counts {
            *merged.pair_counts.entry(key).or_insert(0) += add;
        }
        Ok(merged)
    }

    /// Rebuilds the table with the given pairs removed and marginals
    /// recomputed from the surviving pair counts.
    pub(crate) fn without_pairs(&self, drop: &std::collections::HashSet<(u32, u32)>) -> Self {
        let mut pair_counts = self.pair_counts.clone();
        pair_counts.retain(|key, _| !drop.contains(key));
        let mut n = 0;
        let mut item_counts = vec![0u64; self.item_counts.len()];
        for (&(i, j), &count) in &pair_counts {
            n += count;
            item_counts[i as usize] += count;
            if matches!(self.convention, RoleConvention::BothRoles) {
                item_counts[j as usize] += count;
            }
        }
        Self {
            n,
            item_counts,
            pair_counts,
            symmetric: self.symmetric,
            convention: self.convention,
        }
    }

    pub(crate) fn from_raw(
        n: u64,
        item_counts: Vec<u64>,
        pair_counts: BTreeMap<(u32, u32), u64>,
        symmetric: bool,
        convention: RoleConvention,
    ) -> Self {
        Self {
            n,
            item_counts,
            pair_counts,
            symmetric,
            convention,
        }
    }
}

/// Sparse relatedness values for observed pairs; pairs that never co-occur
/// are missing rather than negative infinity.
#[derive(Debug, Clone)]
pub struct RelatednessEstimate {
    num_items: usize,
    values: BTreeMap<(u32, u32), f64>,
    symmetric: bool,
    shift: f64,
    clip_negative: bool,
}

impl RelatednessEstimate {
    /// Assembles an estimate from explicit values, e.g. a matrix computed
    /// elsewhere or a model's exact relatedness. Diagonal keys are rejected.
    pub fn from_values(
        num_items: usize,
        values: BTreeMap<(u32, u32), f64>,
        symmetric: bool,
    ) -> Result<Self, CooccurError> {
        for (&(i, j), &v) in &values {
            if i == j {
                return Err(CooccurError::DiagonalPair(i));
            }
            if i as usize >= num_items || j as usize >= num_items {
                return Err(CooccurError::ItemOutOfRange(i.max(j), num_items));
            }
            if !v.is_finite() {
                return Err(CooccurError::NonFiniteValue(i, j));
            }
        }
        Ok(Self {
            num_items,
            values,
            symmetric,
            shift: 0.0,
            clip_negative: false,
        })
    }


    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Whether stored keys are unordered (one entry serves both orientations).
    pub fn symmetric_storage(&self) -> bool {
        self.symmetric
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn clip_negative(&self) -> bool {
        self.clip_negative
    }

    pub fn value(&self, i: u32, j: u32) -> Option<f64> {
        let key = if self.symmetric {
            (i.min(j), i.max(j))
        } else {
            (i, j)
        };
        self.values.get(&key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dense row of values over all contexts, with missing entries as 0.
    pub fn dense_row(&self, i: u32) -> Vec<f64> {
        (0..self.num_items as u32)
            .map(|j| if i == j { 0.0 } else { self.value(i, j).unwrap_or(0.0) })
            .collect()
    }
}

/// Computes `log(n * N_ij / (N_i * N_j)) - shift` for every observed pair;
/// with `clip_negative` the shifted values are floored at zero.
pub fn relatedness(
    table: &CooccurrenceTable,
    shift: f64,
    clip_negative: bool,
) -> Result<RelatednessEstimate, CooccurError> {
    if table.n == 0 {
        return Err(CooccurError::EmptyTable);
    }
    let n = table.n as f64;
    let mut values = BTreeMap::new();
    for (&(i, j), &count) in &table.pair_counts {
        let ni = table.item_counts[i as usize] as f64;
        let nj = table.item_counts[j as usize] as f64;
        if ni == 0.0 || nj == 0.0 {
            return Err(CooccurError::ZeroMarginal(i, j));
        }
        let mut value = (n * count as f64 / (ni * nj)).ln() - shift;
        if clip_negative && value < 0.0 {
            value = 0.0;
        }
        values.insert((i, j), value);
    }
    Ok(RelatednessEstimate {
        num_items: table.item_counts.len(),
        values,
        symmetric: table.symmetric,
        shift,
        clip_negative,
    })
}

/// Histogram of observed relatedness values.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub negative_fraction: f64,
}

pub fn relatedness_histogram(
    estimate: &RelatednessEstimate,
    bins: usize,
) -> Result<Histogram, CooccurError> {
    if bins == 0 {
        return Err(CooccurError::NoBins);
    }
    if estimate.is_empty() {
        return Err(CooccurError::EmptyTable);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut negatives = 0u64;
    for (_, v) in estimate.iter() {
        min = min.min(v);
        max = max.max(v);
        if v < 0.0 {
            negatives += 1;
        }
    }
    if max <= min {
        max = min + 1.0;
    }
    let width = (max - min) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| min + b as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for (_, v) in estimate.iter() {
        let bin = (((v - min) / width) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        negative_fraction: negatives as f64 / estimate.len() as f64,
    })
}

/// Anything that can answer "how related are i and j": the sparse estimate
/// or a dense ground-truth matrix.
pub trait RelatednessSource {
    fn num_items(&self) -> usize;
    fn value(&self, i: u32, j: u32) -> Option<f64>;
}

impl RelatednessSource for RelatednessEstimate {
    fn num_items(&self) -> usize {
        self.num_items
    }

    fn value(&self, i: u32, j: u32) -> Option<f64> {
        RelatednessEstimate::value(self, i, j)
    }
}

impl RelatednessSource for TruthMatrix {
    fn num_items(&self) -> usize {
        self.size()
    }

    fn value(&self, i: u32, j: u32) -> Option<f64> {
        self.get(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{PairStream, Provenance};
    use approx::assert_abs_diff_eq;

    fn stream(pairs: Vec<(u32, u32)>) -> PairStream {
        PairStream::new(pairs, Provenance::External, 0)
    }

    #[test]
    fn conventions_match_hand_counts() {
        let s = stream(vec![(0, 1), (0, 1), (1, 0)]);
        let center =
            CooccurrenceTable::accumulate(&s, 2, RoleConvention::CenterOnly, false).unwrap();
        assert_eq!(center.n(), 3);
        assert_eq!(center.pair_count(0, 1), 2);
        assert_eq!(center.pair_count(1, 0), 1);
        assert_eq!(center.item_count(0), 2);
        assert_eq!(center.item_count(1), 1);
        assert_eq!(center.item_counts().iter().sum::<u64>(), center.n());

        let both = CooccurrenceTable::accumulate(&s, 2, RoleConvention::BothRoles, false).unwrap();
        assert_eq!(both.item_count(0), 3);
        assert_eq!(both.item_count(1), 3);
        assert_eq!(both.item_counts().iter().sum::<u64>(), 2 * both.n());

        let sym = CooccurrenceTable::accumulate(&s, 2, RoleConvention::BothRoles, true).unwrap();
        assert_eq!(sym.pair_count(0, 1), 3);
        assert_eq!(sym.pair_count(1, 0), 3);
        assert_eq!(sym.num_stored_pairs(), 1);
    }

    #[test]
    fn independence_cell_is_exactly_zero() {
        // n = 100, N_0 = 10, N_1 = 20, N_01 = 2: log(100 * 2 / 200) = 0.
        let mut pairs = vec![(0u32, 1u32); 2];
        pairs.extend(vec![(0, 2); 8]);
        pairs.extend(vec![(1, 3); 20]);
        // Filler keeping every item's center count positive.
        pairs.extend(vec![(2, 4); 20]);
        pairs.extend(vec![(3, 5); 20]);
        pairs.extend(vec![(4, 2); 15]);
        pairs.extend(vec![(5, 3); 15]);
        let table =
            CooccurrenceTable::accumulate(&stream(pairs), 6, RoleConvention::CenterOnly, false)
                .unwrap();
        assert_eq!(table.n(), 100);
        assert_eq!(table.item_count(0), 10);
        assert_eq!(table.item_count(1), 20);
        assert_eq!(table.pair_count(0, 1), 2);
        let est = relatedness(&table, 0.0, false).unwrap();
        assert_eq!(est.value(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn duplicating_stream_leaves_relatedness_unchanged() {
        let pairs = vec![(0, 1), (1, 2), (2, 0), (0, 1)];
        let single = stream(pairs.clone());
        let doubled = stream([pairs.clone(), pairs].concat());
        for convention in [RoleConvention::CenterOnly, RoleConvention::BothRoles] {
            let a = CooccurrenceTable::accumulate(&single, 3, convention, false).unwrap();
            let b = CooccurrenceTable::accumulate(&doubled, 3, convention, false).unwrap();
            let ra = relatedness(&a, 0.0, false).unwrap();
            let rb = relatedness(&b, 0.0, false).unwrap();
            for (key, va) in ra.iter() {
                assert_abs_diff_eq!(rb.value(key.0, key.1).unwrap(), va, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn merge_equals_concatenated_accumulation() {
        let a = stream(vec![(0, 1), (1, 2), (0, 1)]);
        let b = stream(vec![(2, 0), (0, 1)]);
        let whole = stream(vec![(0, 1), (1, 2), (0, 1), (2, 0), (0, 1)]);
        let ta = CooccurrenceTable::accumulate(&a, 3, RoleConvention::CenterOnly, false).unwrap();
        let tb = CooccurrenceTable::accumulate(&b, 3, RoleConvention::CenterOnly, false).unwrap();
        let tw =
            CooccurrenceTable::accumulate(&whole, 3, RoleConvention::CenterOnly, false).unwrap();
        assert_eq!(ta.merge(&tb).unwrap(), tw);
    }

    #[test]
    fn merge_rejects_mismatches() {
        let s = stream(vec![(0, 1)]);
        let a = CooccurrenceTable::accumulate(&s, 2, RoleConvention::CenterOnly, false).unwrap();
        let b = CooccurrenceTable::accumulate(&s, 2, RoleConvention::BothRoles, false).unwrap();
        let c = CooccurrenceTable::accumulate(&s, 3, RoleConvention::CenterOnly, false).unwrap();
        assert!(a.merge(&b).is_err());
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn sharded_accumulation_is_bit_identical() {
        let pairs: Vec<(u32, u32)> = (0..997u32).map(|t| (t % 13, (t * 7 + 1) % 13)).collect();
        let pairs: Vec<(u32, u32)> = pairs.into_iter().filter(|&(a, b)| a != b).collect();
        let s = stream(pairs);
        let base =
            CooccurrenceTable::accumulate(&s, 13, RoleConvention::CenterOnly, false).unwrap();
        for shards in [1, 2, 3, 8] {
            let sharded = CooccurrenceTable::accumulate_sharded(
                &s,
                13,
                RoleConvention::CenterOnly,
                false,
                shards,
            )
            .unwrap();
            assert_eq!(sharded, base);
        }
    }

    #[test]
    fn clipping_floors_values_at_zero() {
        let mut pairs = vec![(0u32, 2u32); 10];
        pairs.extend(vec![(2, 0); 10]);
        pairs.extend(vec![(1, 3); 10]);
        pairs.extend(vec![(3, 1); 10]);
        pairs.push((0, 1));
        pairs.push((1, 0));
        let table =
            CooccurrenceTable::accumulate(&stream(pairs), 4, RoleConvention::CenterOnly, false)
                .unwrap();
        let raw = relatedness(&table, 0.0, false).unwrap();
        let clipped = relatedness(&table, 0.0, true).unwrap();
        let mut saw_negative = false;
        for (key, v) in raw.iter() {
            let c = clipped.value(key.0, key.1).unwrap();
            if v < 0.0 {
                saw_negative = true;
                assert_eq!(c, 0.0);
            } else {
                assert_eq!(c, v);
            }
        }
        assert!(saw_negative);
    }

    #[test]
    fn empty_table_errors() {
        let table = CooccurrenceTable::accumulate(
            &stream(vec![]),
            2,
            RoleConvention::CenterOnly,
            false,
        )
        .unwrap();
        assert!(matches!(
            relatedness(&table, 0.0, false),
            Err(CooccurError::EmptyTable)
        ));
    }

    #[test]
    fn histogram_counts_and_negative_fraction() {
        let pairs = vec![(0, 1), (0, 1), (0, 1), (1, 2), (2, 0)];
        let table =
            CooccurrenceTable::accumulate(&stream(pairs), 3, RoleConvention::CenterOnly, false)
                .unwrap();
        let est = relatedness(&table, 0.0, false).unwrap();
        let hist = relatedness_histogram(&est, 4).unwrap();
        assert_eq!(hist.counts.iter().sum::<u64>() as usize, est.len());
        assert_eq!(hist.edges.len(), 5);
        let negatives = est.iter().filter(|&(_, v)| v < 0.0).count();
        assert_abs_diff_eq!(
            hist.negative_fraction,
            negatives as f64 / est.len() as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn filtered_table_recomputes_marginals() {
        let pairs = vec![(0, 1), (0, 1), (1, 2), (2, 0)];
        let table =
            CooccurrenceTable::accumulate(&stream(pairs), 3, RoleConvention::CenterOnly, false)
                .unwrap();
        let drop = [(1u32, 2u32)].into_iter().collect();
        let filtered = table.without_pairs(&drop);
        assert_eq!(filtered.n(), 3);
        assert_eq!(filtered.pair_count(1, 2), 0);
        assert_eq!(filtered.item_counts().iter().sum::<u64>(), filtered.n());
    }
}
