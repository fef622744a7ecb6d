//! Stochastic trainer for the skip-gram objective with negative sampling.
//!
//! One positive update per stream pair, `k` negative draws from the marginal
//! item distribution raised to `negative_power`. Draws that hit the center
//! item are discarded rather than redrawn, which keeps the sampled loss an
//! exactly unbiased estimate of `corpus_loss` when the table uses the
//! center-only marginal convention and power 1.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, softplus, EmbedError, Embedding, EmbeddingPair};
use crate::catalog::{splitmix64, PairStream};
use crate::cooccur::CooccurrenceTable;

/// How many workers run SGD and whether updates may race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerMode {
    /// Single worker, sequential updates, bit-identical across runs.
    Deterministic,
    /// Lock-free workers racing on shared rows; fast but not reproducible.
    Racy(usize),
}

impl Default for WorkerMode {
    fn default() -> Self {
        WorkerMode::Deterministic
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Negative draws per positive pair.
    pub k: usize,
    pub epochs: usize,
    /// Initial step size; decays linearly to 1e-4 of itself over all pair
    /// presentations.
    pub learning_rate: f64,
    /// Exponent on the marginal counts for negative sampling; 1.0 matches the
    /// aggregated objective exactly, 0.75 is the conventional smoothing.
    pub negative_power: f64,
    pub seed: u64,
    pub workers: WorkerMode,
    /// Shuffle pair order at each epoch (deterministically from the seed).
    pub shuffle: bool,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            k: 5,
            epochs: 5,
            learning_rate: 0.025,
            negative_power: 1.0,
            seed: 0,
            workers: WorkerMode::Deterministic,
            shuffle: true,
        }
    }
}

impl SgnsConfig {
    fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(EmbedError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.negative_power) {
            return Err(EmbedError::InvalidConfig(
                "negative power must lie in [0, 1]".into(),
            ));
        }
        if self.workers == WorkerMode::Racy(0) {
            return Err(EmbedError::InvalidConfig(
                "racy mode needs at least one worker".into(),
            ));
        }
        Ok(())
    }
}

/// Cumulative-sum sampler over `counts^power`.
struct UnigramSampler {
    cumulative: Vec<f64>,
}

impl UnigramSampler {
    fn new(counts: &[u64], power: f64) -> Result<Self, EmbedError> {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut total = 0.0;
        for &c in counts {
            if c > 0 {
                total += (c as f64).powf(power);
            }
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(EmbedError::EmptyTable);
        }
        Ok(Self { cumulative })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u) as u32
    }
}

/// Embedding rows stored as atomic bits so one code path serves both the
/// sequential and the racy trainer; relaxed loads/stores, no fences.
struct AtomicMatrix {
    dim: usize,
    data: Vec<AtomicU64>,
}

impl AtomicMatrix {
    fn from_embedding(e: &Embedding) -> Self {
        Self {
            dim: e.dim(),
            data: e.data().iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    fn into_embedding(self, rows: usize) -> Embedding {
        let data = self
            .data
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect();
        Embedding::from_data(rows, self.dim, data)
    }

    #[inline]
    fn read_row(&self, i: u32, buf: &mut [f64]) {
        let base = i as usize * self.dim;
        for (c, slot) in buf.iter_mut().enumerate() {
            *slot = f64::from_bits(self.data[base + c].load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn add_to_row(&self, i: u32, delta: &[f64]) {
        let base = i as usize * self.dim;
        for (c, d) in delta.iter().enumerate() {
            let slot = &self.data[base + c];
            let v = f64::from_bits(slot.load(Ordering::Relaxed)) + d;
            slot.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

struct Scratch {
    center: Vec<f64>,
    context: Vec<f64>,
    delta: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            context: vec![0.0; dim],
            delta: vec![0.0; dim],
        }
    }
}

/// One SGD step on a positive pair plus its negative draws; returns the
/// sampled pair loss evaluated at pre-update values.
#[allow(clippy::too_many_arguments)]
fn pair_step(
    z: &AtomicMatrix,
    zt: &AtomicMatrix,
    center: u32,
    context: u32,
    k: usize,
    lr: f64,
    sampler: &UnigramSampler,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> f64 {
    let dim = z.dim;
    z.read_row(center, &mut scratch.center);
    scratch.delta.iter_mut().for_each(|d| *d = 0.0);
    let mut loss = 0.0;

    // Positive sample, then k negative draws; a draw equal to the center is
    // consumed but applies no update.
    for sample in 0..=k {
        let (target, label) = if sample == 0 {
            (context, 1.0)
        } else {
            let m = sampler.draw(rng);
            if m == center {
                continue;
            }
            (m, 0.0)
        };
        zt.read_row(target, &mut scratch.context);
        let x: f64 = scratch
            .center
            .iter()
            .zip(&scratch.context)
            .map(|(a, b)| a * b)
            .sum();
        loss += if label == 1.0 { softplus(-x) } else { softplus(x) };
        let g = lr * (sigmoid(x) - label);
        for c in 0..dim {
            scratch.delta[c] -= g * scratch.context[c];
            scratch.context[c] = -g * scratch.center[c];
        }
        zt.add_to_row(target, &scratch.context);
    }
    z.add_to_row(center, &scratch.delta);
    loss
}

fn decayed_lr(initial: f64, done: u64, total: u64) -> f64 {
    let progress = done as f64 / total as f64;
    initial * (1.0 - progress).max(1e-4)
}

/// Trains an embedding pair on the stream; returns the pair and the mean
/// sampled pair loss per epoch. Aborts with a diagnostic when the loss
/// stops being finite.
pub fn train_sgns(
    stream: &PairStream,
    table: &CooccurrenceTable,
    config: &SgnsConfig,
) -> Result<(EmbeddingPair, Vec<f64>), EmbedError> {
    config.validate()?;
    let pairs = stream.pairs();
    if pairs.is_empty() {
        return Err(EmbedError::EmptyStream);
    }
    let num_items = table.num_items();
    for &(a, b) in pairs {
        if a as usize >= num_items || b as usize >= num_items {
            return Err(EmbedError::DimensionMismatch(
                a.max(b) as usize + 1,
                num_items,
            ));
        }
    }
    let sampler = UnigramSampler::new(table.item_counts(), config.negative_power)?;
    let init = super::init_embeddings(num_items, config.dim, config.seed);
    let z = AtomicMatrix::from_embedding(&init.z);
    let zt = AtomicMatrix::from_embedding(&init.zt);

    let total_presentations = (pairs.len() * config.epochs.max(1)) as u64;
    let progress = AtomicU64::new(0);
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let epoch_loss = match config.workers {
            WorkerMode::Deterministic => {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ epoch as u64));
                rng.set_stream(3);
                let mut scratch = Scratch::new(config.dim);
                let mut loss = 0.0;
                for &idx in &order {
                    let (center, context) = pairs[idx as usize];
                    let done = progress.fetch_add(1, Ordering::Relaxed);
                    let lr = decayed_lr(config.learning_rate, done, total_presentations);
                    loss += pair_step(
                        &z,
                        &zt,
                        center,
                        context,
                        config.k,
                        lr,
                        &sampler,
                        &mut rng,
                        &mut scratch,
                    );
                }
                loss
            }
            WorkerMode::Racy(threads) => {
                let chunk = order.len().div_ceil(threads);
                let losses: Vec<f64> = std::thread::scope(|scope| {
                    let handles: Vec<_> = order
                        .chunks(chunk)
                        .enumerate()
                        .map(|(t, slice)| {
                            let z = &z;
                            let zt = &zt;
                            let sampler = &sampler;
                            let progress = &progress;
                            scope.spawn(move || {
                                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
                                    config.seed ^ (epoch * threads + t + 1) as u64,
                                ));
                                rng.set_stream(3);
                                let mut scratch = Scratch::new(config.dim);
                                let mut loss = 0.0;
                                for &idx in slice {
                                    let (center, context) = pairs[idx as usize];
                                    let done = progress.fetch_add(1, Ordering::Relaxed);
                                    let lr = decayed_lr(
                                        config.learning_rate,
                                        done,
                                        total_presentations,
                                    );
                                    loss += pair_step(
                                        z, zt, center, context, config.k, lr, sampler, &mut rng,
                                        &mut scratch,
                                    );
                                }
                                loss
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                });
                losses.iter().sum()
            }
        };
        let mean = epoch_loss / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(EmbedError::Diverged(epoch));
        }
        trace.push(mean);
    }

    let pair = EmbeddingPair {
        z: z.into_embedding(num_items),
        zt: zt.into_embedding(num_items),
    };
    Ok((pair, trace))
}
