use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{CatalogError, Interaction, InteractionLog, PairStream, Provenance, Vocabulary};

/// Planted-class model: items fall into classes, within-class cells carry
/// weight `within_prob` and cross-class cells `cross_prob`, and listed pairs
/// are made exactly independent of each other.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub num_items: u32,
    pub num_classes: u32,
    pub within_prob: f64,
    pub cross_prob: f64,
    pub num_records: u64,
    #[serde(default)]
    pub planted_independent: Vec<(u32, u32)>,
    /// Records grouped per user; controls history length for split-based
    /// evaluation.
    #[serde(default = "default_pairs_per_user")]
    pub pairs_per_user: u32,
    pub seed: u64,
}

fn default_pairs_per_user() -> u32 {
    1
}

/// Ground-truth relatedness of the planted model; the diagonal is undefined.
#[derive(Debug, Clone)]
pub struct TruthMatrix {
    size: usize,
    values: Vec<f64>,
}

impl TruthMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        if i == j || i as usize >= self.size || j as usize >= self.size {
            None
        } else {
            Some(self.values[i as usize * self.size + j as usize])
        }
    }
}

/// The sampling distribution behind a synthetic corpus, in closed form.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    size: usize,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
    total: f64,
    classes: Vec<u32>,
}

impl SyntheticModel {
    pub fn num_items(&self) -> usize {
        self.size
    }

    /// P(center = i, context = j) per drawn record.
    pub fn joint(&self, i: u32, j: u32) -> f64 {
        self.weights[i as usize * self.size + j as usize] / self.total
    }

    /// P(center = i) = P(context = i); the cell matrix is symmetric.
    pub fn marginal(&self, i: u32) -> f64 {
        self.row_sums[i as usize] / self.total
    }

    /// P(context = e | center = i).
    pub fn conditional(&self, e: u32, i: u32) -> f64 {
        self.weights[i as usize * self.size + e as usize] / self.row_sums[i as usize]
    }

    pub fn class_of(&self, i: u32) -> u32 {
        self.classes[i as usize]
    }
}

/// A generated corpus plus the model it was drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub vocabulary: Vocabulary,
    pub log: InteractionLog,
    pub pairs: PairStream,
    pub truth: TruthMatrix,
    pub model: SyntheticModel,
}

fn validate(spec: &SyntheticSpec) -> Result<(), CatalogError> {
    let err = |msg: &str| Err(CatalogError::InvalidSpec(msg.to_string()));
    if spec.num_items < 2 {
        return err("need at least two items");
    }
    if spec.num_classes == 0 || spec.num_classes > spec.num_items {
        return err("num_classes must be in 1..=num_items");
    }
    if !(spec.within_prob > 0.0 && spec.within_prob < 1.0)
        || !(spec.cross_prob > 0.0 && spec.cross_prob < 1.0)
    {
        return err("class pair probabilities must lie in (0, 1)");
    }
    if spec.within_prob <= spec.cross_prob {
        return err("within_prob must exceed cross_prob");
    }
    if spec.pairs_per_user == 0 {
        return err("pairs_per_user must be positive");
    }
    for &(i, j) in &spec.planted_independent {
        if i == j || i >= spec.num_items || j >= spec.num_items {
            return err("planted pairs must be distinct valid items");
        }
    }
    Ok(())
}

/// Adjusts planted cells until the joint factorizes there: the independence
/// condition w_ij = row_i * row_j / total is a contraction in log space, so
/// a few hundred sweeps reach machine precision.
fn plant_independence(
    weights: &mut [f64],
    size: usize,
    planted: &[(u32, u32)],
) -> Result<(), CatalogError> {
    if planted.is_empty() {
        return Ok(());
    }
    for _ in 0..500 {
        let row_sums: Vec<f64> = (0..size)
            .map(|i| weights[i * size..(i + 1) * size].iter().sum())
            .collect();
        let total: f64 = row_sums.iter().sum();
        let mut residual = 0f64;
        for &(i, j) in planted {
            let (i, j) = (i as usize, j as usize);
            let target = row_sums[i] * row_sums[j] / total;
            residual = residual.max((weights[i * size + j] / target).ln().abs());
            weights[i * size + j] = target;
            weights[j * size + i] = target;
        }
        if residual < 1e-13 {
            return Ok(());
        }
    }
    Err(CatalogError::InvalidSpec(
        "planted independence adjustment failed to converge".to_string(),
    ))
}

/// Draws `num_records` (center, context) pairs i.i.d. from the planted class
/// model and returns them as a pair stream, a per-user log of two-item
/// sessions, and the analytic ground-truth relatedness.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, CatalogError> {
    validate(spec)?;
    let size = spec.num_items as usize;
    let block = size.div_ceil(spec.num_classes as usize);
    let classes: Vec<u32> = (0..size).map(|i| (i / block) as u32).collect();

    let mut weights = vec![0f64; size * size];
    for i in 0..size {
        for j in 0..size {
            if i != j {
                weights[i * size + j] = if classes[i] == classes[j] {
                    spec.within_prob
                } else {
                    spec.cross_prob
                };
            }
        }
    }
    plant_independence(&mut weights, size, &spec.planted_independent)?;

    let row_sums: Vec<f64> = (0..size)
        .map(|i| weights[i * size..(i + 1) * size].iter().sum())
        .collect();
    let total: f64 = row_sums.iter().sum();

    let mut truth = vec![f64::NAN; size * size];
    for i in 0..size {
        for j in 0..size {
            if i != j {
                truth[i * size + j] =
                    (weights[i * size + j] * total / (row_sums[i] * row_sums[j])).ln();
            }
        }
    }
    for &(i, j) in &spec.planted_independent {
        truth[i as usize * size + j as usize] = 0.0;
        truth[j as usize * size + i as usize] = 0.0;
    }

    let mut cdf = Vec::with_capacity(size * size);
    let mut acc = 0f64;
    for &w in &weights {
        acc += w;
        cdf.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vocabulary = Vocabulary::new();
    for i in 0..size {
        vocabulary.intern(&format!("item_{i}"));
    }
    let mut pairs = Vec::with_capacity(spec.num_records as usize);
    let mut records = Vec::with_capacity(2 * spec.num_records as usize);
    for t in 0..spec.num_records {
        let u = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&c| c <= u).min(size * size - 1);
        let center = (cell / size) as u32;
        let context = (cell % size) as u32;
        pairs.push((center, context));
        vocabulary.record_occurrence(center);
        vocabulary.record_occurrence(context);
        let user = (t / u64::from(spec.pairs_per_user)) as u32;
        let session = t as u32;
        records.push(Interaction {
            user,
            session,
            item: context,
            position: 0,
        });
        records.push(Interaction {
            user,
            session,
            item: center,
            position: 1,
        });
    }

    Ok(SyntheticData {
        vocabulary,
        log: InteractionLog::new(records)?,
        pairs: PairStream::new(pairs, Provenance::Synthetic, 0),
        truth: TruthMatrix {
            size,
            values: truth,
        },
        model: SyntheticModel {
            size,
            weights,
            row_sums,
            total,
            classes,
        },
    })
}
