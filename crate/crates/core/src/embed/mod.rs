//! Embedding training against the co-occurrence relatedness measure.
//!
//! The skip-gram objective with k negatives, aggregated over a counted
//! corpus, is minimized exactly when inner products hit the shifted
//! relatedness `R_ij - log k`; the remaining KL divergence between the
//! induced and measured co-occurrence distributions (`kl_sdr_gap`) is the
//! corpus loss above its minimum divided by n(k+1). A weighted least-squares
//! factorization of the same measure serves as the linear baseline.

mod ldr;
mod sgns;

pub use ldr::{
    ldr_gradient_row, ldr_objective, train_ldr, train_ldr_with, FactorizationWeights, LdrConfig,
    LdrMethod,
};
pub use sgns::{train_sgns, SgnsConfig, WorkerMode};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cooccur::CooccurrenceTable;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("table is empty")]
    EmptyTable,
    #[error("pair stream is empty")]
    EmptyStream,
    #[error("corpus-level quantities need a directional (non-symmetric) table")]
    SymmetricTableUnsupported,
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("embedding dimensions disagree: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("linear system is singular even with ridge {0}")]
    SingularSystem(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Dense row-major matrix of embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    dim: usize,
    data: Vec<f64>,
}

impl Embedding {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_data(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim);
        Self { dim, data }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: u32) -> &mut [f64] {
        let i = i as usize;
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Input (`z`) and context (`zt`) embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub z: Embedding,
    pub zt: Embedding,
}

impl EmbeddingPair {
    pub fn inner(&self, i: u32, j: u32) -> f64 {
        dot(self.z.row(i), self.zt.row(j))
    }
}

/// Uniform(-0.5/d, 0.5/d) initialization with separate seed streams for the
/// input and context matrices.
pub fn init_embeddings(num_items: usize, dim: usize, seed: u64) -> EmbeddingPair {
    let scale = 1.0 / dim as f64;
    let draw = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let data = (0..num_items * dim)
            .map(|_| (rng.random::<f64>() - 0.5) * scale)
            .collect();
        Embedding::from_data(num_items, dim, data)
    };
    EmbeddingPair {
        z: draw(0),
        zt: draw(1),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`; equals `-ln(sigmoid(-x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// KL divergence between Bernoulli(sigmoid(a)) and Bernoulli(sigmoid(b)),
/// computed in logit space so saturated probabilities stay finite.
/// `a = -inf` denotes an exactly-zero success probability.
fn bernoulli_kl_logits(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return softplus(b);
    }
    softplus(b) - softplus(a) + sigmoid(a) * (a - b)
}

/// Skip-gram loss of one positive pair against sampled negative rows:
/// `-log sigmoid(<z_i, zt_j>) - sum_m log sigmoid(-<z_i, zt_m>)`.
/// `k` is the configured draw count; the sample may hold fewer rows because
/// draws that hit the center item are discarded, not redrawn.
pub fn pair_loss(z_i: &[f64], zt_j: &[f64], k: usize, negative_context_sample: &[&[f64]]) -> f64 {
    debug_assert!(negative_context_sample.len() <= k);
    let mut loss = softplus(-dot(z_i, zt_j));
    for neg in negative_context_sample {
        loss += softplus(dot(z_i, neg));
    }
    loss
}

/// Which matrix downstream consumers receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportSide {
    Input,
    Context,
    Average,
}

impl Default for ExportSide {
    fn default() -> Self {
        ExportSide::Input
    }
}

/// Selects the input matrix (default), the context matrix, or their mean.
pub fn export_embedding(pair: &EmbeddingPair, side: ExportSide) -> Embedding {
    match side {
        ExportSide::Input => pair.z.clone(),
        ExportSide::Context => pair.zt.clone(),
        ExportSide::Average => {
            let data = pair
                .z
                .data()
                .iter()
                .zip(pair.zt.data())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            Embedding::from_data(pair.z.rows(), pair.z.dim(), data)
        }
    }
}

fn check_corpus_table(pair: &EmbeddingPair, table: &CooccurrenceTable) -> Result<(), EmbedError> {
    if table.n() == 0 {
        return Err(EmbedError::EmptyTable);
    }
    if table.symmetric() {
        return Err(EmbedError::SymmetricTableUnsupported);
    }
    if pair.z.rows() != table.num_items() || pair.zt.rows() != table.num_items() {
        return Err(EmbedError::DimensionMismatch(
            pair.z.rows(),
            table.num_items(),
        ));
    }
    Ok(())
}

/// Aggregated skip-gram corpus loss (negated log likelihood):
/// `sum_ij N_ij * softplus(-x_ij) + (k/n) * N_i * N_j * softplus(x_ij)`
/// over all ordered pairs with i != j. Quadratic in the catalog size.
pub fn corpus_loss(
    pair: &EmbeddingPair,
    table: &CooccurrenceTable,
    k: usize,
) -> Result<f64, EmbedError> {
    check_corpus_table(pair, table)?;
    let n = table.n() as f64;
    let k = k as f64;
    let items = table.num_items() as u32;
    let mut loss = 0.0;
    for i in 0..items {
        let ni = table.item_count(i) as f64;
        for j in 0..items {
            if i == j {
                continue;
            }
            let nij = table.pair_count(i, j) as f64;
            let neg_weight = k / n * ni * table.item_count(j) as f64;
            if nij == 0.0 && neg_weight == 0.0 {
                continue;
            }
            let x = pair.inner(i, j);
            loss += nij * softplus(-x) + neg_weight * softplus(x);
        }
    }
    Ok(loss)
}

/// Infimum of the corpus loss over unconstrained inner products: observed
/// cells sit at the shifted relatedness, unobserved cells send their inner
/// product to -infinity and contribute nothing.
pub fn optimal_corpus_loss(table: &CooccurrenceTable, k: usize) -> Result<f64, EmbedError> {
    if table.n() == 0 {
        return Err(EmbedError::EmptyTable);
    }
    if table.symmetric() {
        return Err(EmbedError::SymmetricTableUnsupported);
    }
    let n = table.n() as f64;
    let kf = k as f64;
    let mut loss = 0.0;
    for ((i, j), count) in table.pairs() {
        let nij = count as f64;
        let neg_weight = kf / n * table.item_count(i) as f64 * table.item_count(j) as f64;
        let x = (nij / neg_weight).ln();
        loss += nij * softplus(-x) + neg_weight * softplus(x);
    }
    Ok(loss)
}

/// KL divergence between the co-occurrence model induced by the embeddings
/// and the one induced by the measured relatedness, under the beta = 1/(k+1)
/// mixture; equals `(corpus_loss - optimal_corpus_loss) / (n * (k+1))`.
pub fn kl_sdr_gap(
    pair: &EmbeddingPair,
    table: &CooccurrenceTable,
    k: usize,
) -> Result<f64, EmbedError> {
    check_corpus_table(pair, table)?;
    let n = table.n() as f64;
    let kf = k as f64;
    let beta = 1.0 / (kf + 1.0);
    let items = table.num_items() as u32;
    let mut gap = 0.0;
    for i in 0..items {
        let pi = table.item_count(i) as f64 / n;
        if pi == 0.0 {
            continue;
        }
        for j in 0..items {
            if i == j {
                continue;
            }
            let pj = table.item_count(j) as f64 / n;
            if pj == 0.0 {
                continue;
            }
            let pij = table.pair_count(i, j) as f64 / n;
            let mixture = beta * pij + (1.0 - beta) * pi * pj;
            // Shifted relatedness in logit form; unobserved cells have
            // sigma(target) = 0 exactly.
            let target = if pij == 0.0 {
                f64::NEG_INFINITY
            } else {
                (pij / (kf * pi * pj)).ln()
            };
            gap += mixture * bernoulli_kl_logits(target, pair.inner(i, j));
        }
    }
    Ok(gap)
}

/// Cell weights and targets shared by both gradient formulas; the error
/// factor is the only difference between them.
pub(crate) fn weighted_gradient_row(
    zt: &Embedding,
    z_i: &[f64],
    cells: &[(u32, f64, f64)],
    error: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; zt.dim()];
    for &(j, weight, target) in cells {
        let row = zt.row(j);
        let factor = weight * error(dot(z_i, row), target);
        for (g, &v) in grad.iter_mut().zip(row) {
            *g += factor * v;
        }
    }
    grad
}

/// Gradient of `corpus_loss` with respect to row i of the input matrix:
/// `sum_j (N_ij + (k/n) N_i N_j) * (sigmoid(x_ij) - sigmoid(target_ij)) * zt_j`
/// where the target is the shifted relatedness.
pub fn sgns_gradient_row(
    pair: &EmbeddingPair,
    i: u32,
    table: &CooccurrenceTable,
    k: usize,
) -> Result<Vec<f64>, EmbedError> {
    check_corpus_table(pair, table)?;
    let cells = gradient_cells(table, k, i);
    Ok(weighted_gradient_row(
        &pair.zt,
        pair.z.row(i),
        &cells,
        |x, target| sigmoid(x) - sigmoid(target),
    ))
}

/// (j, weight, shifted-relatedness target) for every cell in row i with
/// positive weight. The target is -inf on unobserved cells.
pub(crate) fn gradient_cells(table: &CooccurrenceTable, k: usize, i: u32) -> Vec<(u32, f64, f64)> {
    let n = table.n() as f64;
    let kf = k as f64;
    let ni = table.item_count(i) as f64;
    let mut cells = Vec::new();
    for j in 0..table.num_items() as u32 {
        if j == i {
            continue;
        }
        let nij = table.pair_count(i, j) as f64;
        let neg = kf / n * ni * table.item_count(j) as f64;
        let weight = nij + neg;
        if weight == 0.0 {
            continue;
        }
        let target = if nij == 0.0 {
            f64::NEG_INFINITY
        } else {
            (nij / neg).ln()
        };
        cells.push((j, weight, target));
    }
    cells
}
