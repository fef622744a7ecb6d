//! Weighted least-squares factorization of the relatedness matrix — the
//! linear dimension-reduction baseline. Minimizes
//! `sum_ij w_ij (R_ij - <z_i, zt_j>)^2` by full-batch gradient descent
//! (default) or alternating ridge-regularized least squares.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{weighted_gradient_row, EmbedError, Embedding, EmbeddingPair};
use crate::cooccur::{CooccurrenceTable, RelatednessEstimate};

/// Per-cell weights `P_ij + k * P_i * P_j` over the observed support, or a
/// uniform dense grid for oracle comparisons against unweighted truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationWeights {
    num_items: usize,
    entries: BTreeMap<(u32, u32), f64>,
}

impl FactorizationWeights {
    /// Weights from the table's empirical probabilities on its observed
    /// support; every stored pair gets `P_ij + k P_i P_j > 0`.
    pub fn from_table(table: &CooccurrenceTable, k: usize) -> Result<Self, EmbedError> {
        if table.n() == 0 {
            return Err(EmbedError::EmptyTable);
        }
        let n = table.n() as f64;
        let mut entries = BTreeMap::new();
        for ((i, j), count) in table.pairs() {
            let pij = count as f64 / n;
            let pi = table.item_count(i) as f64 / n;
            let pj = table.item_count(j) as f64 / n;
            entries.insert((i, j), pij + k as f64 * pi * pj);
        }
        Ok(Self {
            num_items: table.num_items(),
            entries,
        })
    }

    /// Weight 1 on every ordered cell including the diagonal; together with
    /// zero targets for missing cells this makes the objective the plain
    /// Frobenius error against the dense value matrix.
    pub fn uniform_dense(num_items: usize) -> Self {
        let mut entries = BTreeMap::new();
        for i in 0..num_items as u32 {
            for j in 0..num_items as u32 {
                entries.insert((i, j), 1.0);
            }
        }
        Self { num_items, entries }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdrMethod {
    GradientDescent,
    AlternatingLeastSquares,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LdrConfig {
    pub dim: usize,
    pub iterations: usize,
    pub seed: u64,
    pub method: LdrMethod,
    /// Step size for gradient descent; unused by alternating least squares.
    pub learning_rate: f64,
    /// Ridge term keeping the per-row systems positive definite.
    pub ridge: f64,
}

impl Default for LdrConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            iterations: 100,
            seed: 0,
            method: LdrMethod::GradientDescent,
            learning_rate: 0.1,
            ridge: 1e-9,
        }
    }
}

/// Weighted cells gathered by row and by column. Cells carrying weight but no
/// observed value (the diagonal under dense weights) regress toward zero.
struct Problem {
    by_row: Vec<Vec<(u32, f64, f64)>>,
    by_col: Vec<Vec<(u32, f64, f64)>>,
}

fn build_problem(est: &RelatednessEstimate, weights: &FactorizationWeights) -> Problem {
    let items = weights.num_items();
    let mut by_row: Vec<Vec<(u32, f64, f64)>> = vec![Vec::new(); items];
    let mut by_col: Vec<Vec<(u32, f64, f64)>> = vec![Vec::new(); items];
    for ((i, j), w) in weights.iter() {
        let target = if i == j {
            0.0
        } else {
            est.value(i, j).unwrap_or(0.0)
        };
        by_row[i as usize].push((j, w, target));
        by_col[j as usize].push((i, w, target));
    }
    Problem { by_row, by_col }
}

/// `sum_ij w_ij (R_ij - <z_i, zt_j>)^2` over the weight support.
pub fn ldr_objective(
    pair: &EmbeddingPair,
    est: &RelatednessEstimate,
    weights: &FactorizationWeights,
) -> f64 {
    let mut total = 0.0;
    for ((i, j), w) in weights.iter() {
        let target = if i == j {
            0.0
        } else {
            est.value(i, j).unwrap_or(0.0)
        };
        let r = target - pair.inner(i, j);
        total += w * r * r;
    }
    total
}

/// Gradient of `ldr_objective` with respect to row i of the input matrix:
/// `sum_j w_ij * 2(x_ij - R_ij) * zt_j` — the skip-gram row gradient with
/// the logistic wrapper replaced by a factor of two.
pub fn ldr_gradient_row(
    pair: &EmbeddingPair,
    i: u32,
    est: &RelatednessEstimate,
    weights: &FactorizationWeights,
) -> Vec<f64> {
    let problem = build_problem(est, weights);
    weighted_gradient_row(
        &pair.zt,
        pair.z.row(i),
        &problem.by_row[i as usize],
        |x, t| 2.0 * (x - t),
    )
}

/// Trains the baseline with gradient descent and default hyperparameters;
/// see `train_ldr_with` for the alternating-least-squares flag and the
/// objective trace.
pub fn train_ldr(
    est: &RelatednessEstimate,
    weights: &FactorizationWeights,
    d: usize,
    iterations: usize,
    seed: u64,
) -> Result<EmbeddingPair, EmbedError> {
    let config = LdrConfig {
        dim: d,
        iterations,
        seed,
        ..LdrConfig::default()
    };
    train_ldr_with(est, weights, &config).map(|(pair, _)| pair)
}

pub fn train_ldr_with(
    est: &RelatednessEstimate,
    weights: &FactorizationWeights,
    config: &LdrConfig,
) -> Result<(EmbeddingPair, Vec<f64>), EmbedError> {
    if config.dim == 0 {
        return Err(EmbedError::InvalidConfig("dim must be at least 1".into()));
    }
    if weights.is_empty() {
        return Err(EmbedError::EmptyTable);
    }
    if est.num_items() != weights.num_items() {
        return Err(EmbedError::DimensionMismatch(
            est.num_items(),
            weights.num_items(),
        ));
    }
    let items = weights.num_items();
    let problem = build_problem(est, weights);
    let mut pair = super::init_embeddings(items, config.dim, config.seed);
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        match config.method {
            LdrMethod::GradientDescent => gd_step(&mut pair, &problem, config.learning_rate),
            LdrMethod::AlternatingLeastSquares => als_step(&mut pair, &problem, config.ridge)?,
        }
        let objective = ldr_objective(&pair, est, weights);
        if !objective.is_finite() {
            return Err(EmbedError::Diverged(iteration));
        }
        trace.push(objective);
    }
    Ok((pair, trace))
}

fn gd_step(pair: &mut EmbeddingPair, problem: &Problem, lr: f64) {
    let dim = pair.z.dim();
    let items = pair.z.rows();
    let mut grad_z = vec![0.0; items * dim];
    let mut grad_zt = vec![0.0; items * dim];
    for (i, cells) in problem.by_row.iter().enumerate() {
        let z_i = pair.z.row(i as u32);
        for &(j, w, t) in cells {
            let zt_j = pair.zt.row(j);
            let factor = 2.0 * w * (super::dot(z_i, zt_j) - t);
            for c in 0..dim {
                grad_z[i * dim + c] += factor * zt_j[c];
                grad_zt[j as usize * dim + c] += factor * z_i[c];
            }
        }
    }
    for i in 0..items as u32 {
        let row = pair.z.row_mut(i);
        for c in 0..dim {
            row[c] -= lr * grad_z[i as usize * dim + c];
        }
        let row = pair.zt.row_mut(i);
        for c in 0..dim {
            row[c] -= lr * grad_zt[i as usize * dim + c];
        }
    }
}

/// Solves every row of Z against fixed Zt, then every row of Zt against the
/// new Z; each solve is an exact ridge regression, so the objective cannot
/// increase beyond the ridge perturbation.
fn als_step(pair: &mut EmbeddingPair, problem: &Problem, ridge: f64) -> Result<(), EmbedError> {
    solve_side(&mut pair.z, &pair.zt, &problem.by_row, ridge)?;
    solve_side(&mut pair.zt, &pair.z, &problem.by_col, ridge)?;
    Ok(())
}

fn solve_side(
    out: &mut Embedding,
    fixed: &Embedding,
    cells: &[Vec<(u32, f64, f64)>],
    ridge: f64,
) -> Result<(), EmbedError> {
    let dim = out.dim();
    for (i, row_cells) in cells.iter().enumerate() {
        if row_cells.is_empty() {
            continue;
        }
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        for &(j, w, t) in row_cells {
            let v = fixed.row(j);
            for r in 0..dim {
                b[r] += w * t * v[r];
                for c in 0..dim {
                    a[(r, c)] += w * v[r] * v[c];
                }
            }
        }
        let mut bump = ridge.max(f64::MIN_POSITIVE);
        let solution = loop {
            let mut regularized = a.clone();
            for r in 0..dim {
                regularized[(r, r)] += bump;
            }
            match regularized.cholesky() {
                Some(chol) => break chol.solve(&b),
                None => {
                    bump *= 100.0;
                    if bump > 1.0 {
                        return Err(EmbedError::SingularSystem(bump));
                    }
                }
            }
        };
        out.row_mut(i as u32).copy_from_slice(solution.as_slice());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::relatedness;
    use crate::embed::tests::dense_synthetic_table;
    use crate::embed::init_embeddings;
    use approx::assert_abs_diff_eq;

    fn rank_one_estimate(items: usize) -> RelatednessEstimate {
        let u: Vec<f64> = (0..items).map(|i| 0.4 + 0.13 * i as f64).collect();
        let v: Vec<f64> = (0..items).map(|j| -0.6 + 0.21 * j as f64).collect();
        let mut values = BTreeMap::new();
        for i in 0..items as u32 {
            for j in 0..items as u32 {
                if i != j {
                    values.insert((i, j), u[i as usize] * v[j as usize]);
                }
            }
        }
        RelatednessEstimate::from_values(items, values, false).unwrap()
    }

    fn observed_uniform_weights(est: &RelatednessEstimate) -> FactorizationWeights {
        let entries = est.iter().map(|(k, _)| (k, 1.0)).collect();
        FactorizationWeights {
            num_items: est.num_items(),
            entries,
        }
    }

    #[test]
    fn weights_match_probability_formula() {
        let (_, table) = dense_synthetic_table(6, 4_000, 31);
        let k = 3;
        let weights = FactorizationWeights::from_table(&table, k).unwrap();
        assert_eq!(weights.len(), table.num_stored_pairs());
        let n = table.n() as f64;
        for ((i, j), w) in weights.iter() {
            let expected = table.pair_count(i, j) as f64 / n
                + k as f64 * table.item_count(i) as f64 * table.item_count(j) as f64 / (n * n);
            assert_abs_diff_eq!(w, expected, epsilon = 1e-15);
            assert!(w > 0.0);
        }
    }

    #[test]
    fn rank_one_target_is_fit_exactly_in_one_dimension() {
        let est = rank_one_estimate(7);
        let weights = observed_uniform_weights(&est);
        let config = LdrConfig {
            dim: 1,
            iterations: 30,
            seed: 3,
            method: LdrMethod::AlternatingLeastSquares,
            ..LdrConfig::default()
        };
        let (pair, trace) = train_ldr_with(&est, &weights, &config).unwrap();
        assert!(trace.last().unwrap() < &1e-12, "trace end {:?}", trace.last());
        for ((i, j), value) in est.iter() {
            assert_abs_diff_eq!(pair.inner(i, j), value, epsilon = 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, table) = dense_synthetic_table(7, 6_000, 32);
        let est = relatedness(&table, 0.0, true).unwrap();
        let weights = FactorizationWeights::from_table(&table, 2).unwrap();
        for seed in 0..3 {
            let mut pair = init_embeddings(7, 4, seed);
            let i = (seed % 7) as u32;
            let analytic = ldr_gradient_row(&pair, i, &est, &weights);
            let h = 1e-6;
            for c in 0..4 {
                let orig = pair.z.row(i)[c];
                pair.z.row_mut(i)[c] = orig + h;
                let plus = ldr_objective(&pair, &est, &weights);
                pair.z.row_mut(i)[c] = orig - h;
                let minus = ldr_objective(&pair, &est, &weights);
                pair.z.row_mut(i)[c] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let rel = (analytic[c] - numeric).abs() / numeric.abs().max(1e-9);
                assert!(rel <= 1e-6, "analytic {} vs numeric {numeric}", analytic[c]);
            }
        }
    }

    #[test]
    fn als_objective_is_non_increasing() {
        let (_, table) = dense_synthetic_table(9, 8_000, 33);
        let est = relatedness(&table, 0.0, true).unwrap();
        let weights = FactorizationWeights::from_table(&table, 1).unwrap();
        let config = LdrConfig {
            dim: 3,
            iterations: 25,
            seed: 5,
            method: LdrMethod::AlternatingLeastSquares,
            ..LdrConfig::default()
        };
        let (_, trace) = train_ldr_with(&est, &weights, &config).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "trace rose: {w:?}");
        }
    }

    #[test]
    fn dense_uniform_objective_matches_truncated_svd_residual() {
        let (_, table) = dense_synthetic_table(12, 50_000, 34);
        let est = relatedness(&table, 0.0, false).unwrap();
        // Every off-diagonal cell observed makes the dense problem complete.
        assert_eq!(est.len(), 12 * 11);
        let weights = FactorizationWeights::uniform_dense(12);
        let d = 3;
        let config = LdrConfig {
            dim: d,
            iterations: 60,
            seed: 7,
            method: LdrMethod::AlternatingLeastSquares,
            ..LdrConfig::default()
        };
        let (_, trace) = train_ldr_with(&est, &weights, &config).unwrap();
        let dense = DMatrix::from_fn(12, 12, |i, j| {
            if i == j {
                0.0
            } else {
                est.value(i as u32, j as u32).unwrap()
            }
        });
        let svd = dense.svd(false, false);
        let residual: f64 = svd
            .singular_values
            .iter()
            .skip(d)
            .map(|s| s * s)
            .sum();
        let achieved = *trace.last().unwrap();
        let rel = (achieved - residual).abs() / residual;
        assert!(
            rel < 0.01,
            "objective {achieved} vs SVD residual {residual} (rel {rel})"
        );
    }

    #[test]
    fn gradient_descent_reduces_the_objective() {
        let est = rank_one_estimate(6);
        let weights = observed_uniform_weights(&est);
        let config = LdrConfig {
            dim: 2,
            iterations: 400,
            seed: 9,
            method: LdrMethod::GradientDescent,
            learning_rate: 0.02,
            ..LdrConfig::default()
        };
        let (pair, trace) = train_ldr_with(&est, &weights, &config).unwrap();
        let start = ldr_objective(&init_embeddings(6, 2, 9), &est, &weights);
        assert!(trace.last().unwrap() < &(0.01 * start));
        assert!(pair.z.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_descent_divergence_is_detected() {
        let est = rank_one_estimate(6);
        let weights = observed_uniform_weights(&est);
        let config = LdrConfig {
            dim: 2,
            iterations: 50,
            seed: 9,
            method: LdrMethod::GradientDescent,
            learning_rate: 1e6,
            ..LdrConfig::default()
        };
        assert!(matches!(
            train_ldr_with(&est, &weights, &config),
            Err(EmbedError::Diverged(_))
        ));
    }

    #[test]
    fn default_entry_point_uses_gradient_descent() {
        let est = rank_one_estimate(5);
        let weights = observed_uniform_weights(&est);
        let pair = train_ldr(&est, &weights, 2, 10, 1).unwrap();
        assert_eq!(pair.z.rows(), 5);
        assert_eq!(pair.z.dim(), 2);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let est = rank_one_estimate(5);
        let weights = FactorizationWeights::uniform_dense(6);
        assert!(matches!(
            train_ldr(&est, &weights, 2, 5, 1),
            Err(EmbedError::DimensionMismatch(5, 6))
        ));
    }
}
