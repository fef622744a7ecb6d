//! Orthonormal singular bases, the subspace alignment score
//! `S(Z, X) = ||U(X)^T U(Z)||_F^2`, and a Monte-Carlo check of the linear
//! generalization bound `L * sqrt((tr(S) - lambda_min(S) * S(Z,X)) / |I|) + 2*L*sigma`.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cooccur::RelatednessEstimate;
use crate::embed::Embedding;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("requested rank {0} exceeds min(rows, cols) = {1}")]
    RankTooLarge(usize, usize),
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("bases have different row counts: {0} vs {1}")]
    RowMismatch(usize, usize),
    #[error("invalid simulation config: {0}")]
    InvalidSim(String),
}

/// Where a basis came from; purely informational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    Embedding,
    Relatedness,
}

/// Top left singular vectors of a matrix with their singular values.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
    source: BasisSource,
}

impl SpectralBasis {
    /// Wrap pre-computed basis columns. Callers are responsible for the
    /// columns being orthonormal; [`left_singular_basis`] is the checked
    /// route from a raw matrix.
    pub fn from_parts(u: DMatrix<f64>, singular_values: Vec<f64>, source: BasisSource) -> Self {
        Self {
            u,
            singular_values,
            source,
        }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn source(&self) -> BasisSource {
        self.source
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }
}

/// Row threshold beyond which the dense SVD is replaced by randomized
/// subspace iteration.
const DENSE_LIMIT: usize = 2000;
const POWER_ITERATIONS: usize = 20;
const OVERSAMPLING: usize = 8;
/// Fixed seed for the randomized path so bases are reproducible.
const SKETCH_SEED: u64 = 0x5eed_0001;

/// Top-r left singular basis of `m`. Dense SVD up to 2000 rows, randomized
/// subspace iteration (20 power steps, oversampling 8) above.
pub fn left_singular_basis(
    m: &DMatrix<f64>,
    rank: usize,
    source: BasisSource,
) -> Result<SpectralBasis, SpectralError> {
    let max_rank = m.nrows().min(m.ncols());
    if rank == 0 {
        return Err(SpectralError::ZeroRank);
    }
    if rank > max_rank {
        return Err(SpectralError::RankTooLarge(rank, max_rank));
    }
    if m.nrows() <= DENSE_LIMIT {
        dense_left_basis(m, rank, source)
    } else {
        randomized_left_basis(m, rank, POWER_ITERATIONS, OVERSAMPLING, SKETCH_SEED, source)
    }
}

fn dense_left_basis(
    m: &DMatrix<f64>,
    rank: usize,
    source: BasisSource,
) -> Result<SpectralBasis, SpectralError> {
    let svd = m.clone().svd(true, false);
    let u_full = svd.u.expect("left singular vectors requested");
    // nalgebra returns singular values unordered in no particular contract;
    // sort explicitly so truncation always keeps the largest.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut u = DMatrix::zeros(m.nrows(), rank);
    let mut values = Vec::with_capacity(rank);
    for (col, &idx) in order.iter().take(rank).enumerate() {
        u.set_column(col, &u_full.column(idx));
        values.push(svd.singular_values[idx]);
    }
    Ok(SpectralBasis::from_parts(u, values, source))
}

/// Randomized range finder with power iteration; accurate whenever the
/// spectrum decays past the requested rank.
pub fn randomized_left_basis(
    m: &DMatrix<f64>,
    rank: usize,
    power_iterations: usize,
    oversampling: usize,
    seed: u64,
    source: BasisSource,
) -> Result<SpectralBasis, SpectralError> {
    let max_rank = m.nrows().min(m.ncols());
    if rank == 0 {
        return Err(SpectralError::ZeroRank);
    }
    if rank > max_rank {
        return Err(SpectralError::RankTooLarge(rank, max_rank));
    }
    let sketch = (rank + oversampling).min(max_rank);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(m.ncols(), sketch, |_, _| standard_normal(&mut rng));
    let mut q = orthonormalize(&(m * omega));
    for _ in 0..power_iterations {
        q = orthonormalize(&(m.transpose() * &q));
        q = orthonormalize(&(m * &q));
    }
    // Project, take the small dense SVD, rotate back.
    let b = q.transpose() * m;
    let svd = b.clone().svd(true, false);
    let u_small = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let rotated = &q * u_small;
    let mut u = DMatrix::zeros(m.nrows(), rank);
    let mut values = Vec::with_capacity(rank);
    for (col, &idx) in order.iter().take(rank).enumerate() {
        u.set_column(col, &rotated.column(idx));
        values.push(svd.singular_values[idx]);
    }
    Ok(SpectralBasis::from_parts(u, values, source))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 nudged away from zero to keep the log finite.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    // Fix column signs so the factorization is unique and reproducible.
    let r = qr.r();
    for c in 0..q.ncols().min(r.nrows()) {
        if r[(c, c)] < 0.0 {
            for row in 0..q.nrows() {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    q
}

/// Dense matrix view of an embedding.
pub fn embedding_matrix(e: &Embedding) -> DMatrix<f64> {
    DMatrix::from_fn(e.rows(), e.dim(), |i, j| e.row(i as u32)[j])
}

/// Dense matrix view of a relatedness estimate with missing entries and the
/// diagonal as zero. The pipeline clips negatives before this point.
pub fn estimate_matrix(est: &RelatednessEstimate) -> DMatrix<f64> {
    let items = est.num_items();
    let mut m = DMatrix::zeros(items, items);
    for ((i, j), v) in est.iter() {
        m[(i as usize, j as usize)] = v;
        if est.symmetric_storage() {
            m[(j as usize, i as usize)] = v;
        }
    }
    m
}

/// `||U(X)^T U(Z)||_F^2`; bounded by the smaller rank, equal to it when one
/// column space contains the other.
pub fn alignment_score(
    basis_z: &SpectralBasis,
    basis_x: &SpectralBasis,
) -> Result<f64, SpectralError> {
    if basis_z.rows() != basis_x.rows() {
        return Err(SpectralError::RowMismatch(basis_z.rows(), basis_x.rows()));
    }
    let cross = basis_x.u().transpose() * basis_z.u();
    Ok(cross.iter().map(|v| v * v).sum())
}

/// Configuration of the generalization experiment: responses are
/// `y = U(X) theta0 + eps` with `theta0 ~ N(0, Sigma)`, `eps ~ N(0, sigma^2 I)`;
/// least-squares fits on each basis are scored against the clean responses
/// with a clamped soft-label logistic loss of certified Lipschitz constant L.
#[derive(Debug, Clone)]
pub struct GeneralizationSim {
    pub theta_covariance: DMatrix<f64>,
    pub noise_sigma: f64,
    pub lipschitz: f64,
    pub trials: usize,
    pub seed: u64,
    /// Predictions and targets are clamped to this magnitude inside the loss.
    pub clamp: f64,
}

impl GeneralizationSim {
    /// Identity covariance scaled to unit spectral norm, the default clamp of
    /// 10 and the conservative L = max(1, clamp/4).
    pub fn unit(rank: usize, noise_sigma: f64, trials: usize, seed: u64) -> Self {
        let clamp = 10.0_f64;
        Self {
            theta_covariance: DMatrix::identity(rank, rank),
            noise_sigma,
            lipschitz: (clamp / 4.0).max(1.0),
            trials,
            seed,
            clamp,
        }
    }

    fn validate(&self, rank_x: usize) -> Result<(), SpectralError> {
        let c = &self.theta_covariance;
        if c.nrows() != rank_x || c.ncols() != rank_x {
            return Err(SpectralError::InvalidSim(format!(
                "covariance is {}x{}, basis rank is {rank_x}",
                c.nrows(),
                c.ncols()
            )));
        }
        let asym = (c - c.transpose()).norm();
        if asym > 1e-10 * (1.0 + c.norm()) {
            return Err(SpectralError::InvalidSim("covariance not symmetric".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SpectralError::InvalidSim("noise sigma must be >= 0".into()));
        }
        if self.trials == 0 {
            return Err(SpectralError::InvalidSim("trials must be >= 1".into()));
        }
        if self.lipschitz <= 0.0 || self.clamp <= 0.0 {
            return Err(SpectralError::InvalidSim(
                "lipschitz and clamp must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-trial and aggregate outcome of the simulation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimReport {
    /// Mean of loss(Z-fit) - loss(X-fit) over trials.
    pub avg_gap: f64,
    /// Monte-Carlo standard error of the mean gap.
    pub gap_std_error: f64,
    /// Closed-form bound `L sqrt((tr - lambda_min * S)/|I|) + 2 L sigma`.
    pub bound_value: f64,
    pub alignment: f64,
    pub trials: usize,
    pub per_trial_gap: Vec<f64>,
}

/// Soft-label logistic loss with clamped inputs; 1-Lipschitz in the
/// prediction, certified here with the configured constant.
fn clamped_logistic_loss(prediction: f64, target: f64, clamp: f64) -> f64 {
    let a = prediction.clamp(-clamp, clamp);
    let b = target.clamp(-clamp, clamp);
    let p = crate::embed::sigmoid(b);
    p * crate::embed::softplus(-a) + (1.0 - p) * crate::embed::softplus(a)
}

/// Runs the Monte-Carlo experiment on two orthonormal bases. The fits are
/// exact projections (the normal equations of an orthonormal design are the
/// identity, so no ridge fallback can trigger).
pub fn simulate_generalization(
    basis_x: &SpectralBasis,
    basis_z: &SpectralBasis,
    sim: &GeneralizationSim,
) -> Result<SimReport, SpectralError> {
    if basis_z.rows() != basis_x.rows() {
        return Err(SpectralError::RowMismatch(basis_z.rows(), basis_x.rows()));
    }
    sim.validate(basis_x.rank())?;
    let rows = basis_x.rows() as f64;
    let alignment = alignment_score(basis_z, basis_x)?;

    // Sigma = Q diag(lambda) Q^T lets theta0 = Q diag(sqrt(lambda)) g.
    let eig = sim.theta_covariance.clone().symmetric_eigen();
    let mut lambda_min = f64::INFINITY;
    let mut trace = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l < -1e-9 {
            return Err(SpectralError::InvalidSim(format!(
                "covariance has negative eigenvalue {l}"
            )));
        }
        lambda_min = lambda_min.min(l.max(0.0));
        trace += l.max(0.0);
    }
    let sqrt_lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();

    let bound_value = sim.lipschitz * ((trace - lambda_min * alignment) / rows).max(0.0).sqrt()
        + 2.0 * sim.lipschitz * sim.noise_sigma;

    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let rank = basis_x.rank();
    let mut per_trial_gap = Vec::with_capacity(sim.trials);
    for _ in 0..sim.trials {
        let g = DVector::from_fn(rank, |r, _| sqrt_lambda[r] * standard_normal(&mut rng));
        let theta = &eig.eigenvectors * g;
        let y0 = basis_x.u() * theta;
        let noise = DVector::from_fn(y0.len(), |_, _| sim.noise_sigma * standard_normal(&mut rng));
        let y = &y0 + noise;
        // Least squares on an orthonormal basis is the orthogonal projection.
        let fit_z = basis_z.u() * (basis_z.u().transpose() * &y);
        let fit_x = basis_x.u() * (basis_x.u().transpose() * &y);
        let mut loss_z = 0.0;
        let mut loss_x = 0.0;
        for i in 0..y0.len() {
            loss_z += clamped_logistic_loss(fit_z[i], y0[i], sim.clamp);
            loss_x += clamped_logistic_loss(fit_x[i], y0[i], sim.clamp);
        }
        per_trial_gap.push((loss_z - loss_x) / rows);
    }
    let avg_gap = per_trial_gap.iter().sum::<f64>() / sim.trials as f64;
    let variance = if sim.trials > 1 {
        per_trial_gap
            .iter()
            .map(|g| (g - avg_gap).powi(2))
            .sum::<f64>()
            / (sim.trials - 1) as f64
    } else {
        0.0
    };
    Ok(SimReport {
        avg_gap,
        gap_std_error: (variance / sim.trials as f64).sqrt(),
        bound_value,
        alignment,
        trials: sim.trials,
        per_trial_gap,
    })
}

/// Interpolates between a reference basis and an orthogonal complement so the
/// alignment with the reference is exactly `rank * cos^2(angle)`; the test
/// grids and the alignment sweep in the docs build on this.
pub fn rotated_basis(
    reference: &SpectralBasis,
    complement: &SpectralBasis,
    angle: f64,
) -> Result<SpectralBasis, SpectralError> {
    if reference.rows() != complement.rows() {
        return Err(SpectralError::RowMismatch(
            reference.rows(),
            complement.rows(),
        ));
    }
    if reference.rank() > complement.rank() {
        return Err(SpectralError::RankTooLarge(
            reference.rank(),
            complement.rank(),
        ));
    }
    let (c, s) = (angle.cos(), angle.sin());
    let mut u = DMatrix::zeros(reference.rows(), reference.rank());
    for col in 0..reference.rank() {
        for row in 0..reference.rows() {
            u[(row, col)] = c * reference.u()[(row, col)] + s * complement.u()[(row, col)];
        }
    }
    Ok(SpectralBasis::from_parts(
        u,
        reference.singular_values().to_vec(),
        reference.source(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| standard_normal(&mut rng))
    }

    /// Matrix with a controlled spectrum: singular value `spectrum[i]` on
    /// random orthonormal factors.
    fn planted_matrix(rows: usize, cols: usize, spectrum: &[f64], seed: u64) -> DMatrix<f64> {
        let r = spectrum.len();
        let u = orthonormalize(&random_matrix(rows, r, seed));
        let v = orthonormalize(&random_matrix(cols, r, seed ^ 0xabcd));
        let mut m = DMatrix::zeros(rows, cols);
        for (k, &s) in spectrum.iter().enumerate() {
            let uk = u.column(k);
            let vk = v.column(k);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] += s * uk[i] * vk[j];
                }
            }
        }
        m
    }

    #[test]
    fn identity_matrix_gives_unit_singular_values() {
        let m = DMatrix::<f64>::identity(6, 6);
        let basis = left_singular_basis(&m, 6, BasisSource::Relatedness).unwrap();
        for &s in basis.singular_values() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        let gram = basis.u().transpose() * basis.u();
        assert!((gram - DMatrix::<f64>::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn basis_is_orthonormal_on_random_input() {
        let m = random_matrix(50, 8, 3);
        let basis = left_singular_basis(&m, 8, BasisSource::Embedding).unwrap();
        let gram = basis.u().transpose() * basis.u();
        assert!((gram - DMatrix::<f64>::identity(8, 8)).norm() <= 1e-10);
        let values = basis.singular_values();
        for w in values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rank_bounds_are_enforced() {
        let m = random_matrix(10, 4, 4);
        assert!(matches!(
            left_singular_basis(&m, 5, BasisSource::Embedding),
            Err(SpectralError::RankTooLarge(5, 4))
        ));
        assert!(matches!(
            left_singular_basis(&m, 0, BasisSource::Embedding),
            Err(SpectralError::ZeroRank)
        ));
    }

    #[test]
    fn randomized_basis_matches_dense_on_decaying_spectrum() {
        // Spectral gap of 2x below the kept rank makes 20 power iterations
        // overkill; principal angles must collapse.
        let spectrum: Vec<f64> = (0..6)
            .map(|i| 8.0 * 0.9f64.powi(i))
            .chain((0..30).map(|i| 0.5 * 0.8f64.powi(i)))
            .collect();
        let m = planted_matrix(200, 200, &spectrum, 5);
        let rank = 6;
        let dense = dense_left_basis(&m, rank, BasisSource::Relatedness).unwrap();
        let fast =
            randomized_left_basis(&m, rank, 20, 8, 42, BasisSource::Relatedness).unwrap();
        // sin of the largest principal angle via the projected residual.
        let residual = fast.u() - dense.u() * (dense.u().transpose() * fast.u());
        let sin_theta = residual.svd(false, false).singular_values[0];
        assert!(sin_theta <= 1e-6, "sin(theta) = {sin_theta}");
        for (a, b) in dense.singular_values().iter().zip(fast.singular_values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6 * a.abs());
        }
    }

    #[test]
    fn alignment_of_basis_with_itself_is_rank() {
        let m = random_matrix(40, 12, 6);
        let basis = left_singular_basis(&m, 5, BasisSource::Embedding).unwrap();
        let s = alignment_score(&basis, &basis).unwrap();
        assert_abs_diff_eq!(s, 5.0, epsilon = 1e-8);
    }

    #[test]
    fn alignment_of_complementary_bases_is_zero() {
        let mut a = DMatrix::zeros(8, 3);
        let mut b = DMatrix::zeros(8, 3);
        for c in 0..3 {
            a[(c, c)] = 1.0;
            b[(c + 4, c)] = 1.0;
        }
        let ba = SpectralBasis::from_parts(a, vec![1.0; 3], BasisSource::Embedding);
        let bb = SpectralBasis::from_parts(b, vec![1.0; 3], BasisSource::Relatedness);
        assert_abs_diff_eq!(alignment_score(&ba, &bb).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn alignment_is_symmetric_and_rotation_invariant() {
        let x = left_singular_basis(&random_matrix(30, 10, 7), 4, BasisSource::Relatedness)
            .unwrap();
        let z = left_singular_basis(&random_matrix(30, 10, 8), 4, BasisSource::Embedding).unwrap();
        let s_zx = alignment_score(&z, &x).unwrap();
        let s_xz = alignment_score(&x, &z).unwrap();
        assert_abs_diff_eq!(s_zx, s_xz, epsilon = 1e-10);

        // Right-multiplying a basis by an orthogonal matrix spans the same
        // space, so the score cannot move.
        let q = orthonormalize(&random_matrix(4, 4, 9));
        let rotated = SpectralBasis::from_parts(
            z.u() * &q,
            z.singular_values().to_vec(),
            BasisSource::Embedding,
        );
        assert_abs_diff_eq!(
            alignment_score(&rotated, &x).unwrap(),
            s_zx,
            epsilon = 1e-10
        );
    }

    #[test]
    fn rotated_basis_hits_requested_alignment() {
        let x = left_singular_basis(&random_matrix(24, 24, 10), 4, BasisSource::Relatedness)
            .unwrap();
        // Complement: last 4 columns of the full basis.
        let full = left_singular_basis(&random_matrix(24, 24, 10), 24, BasisSource::Relatedness)
            .unwrap();
        let mut comp = DMatrix::zeros(24, 4);
        for c in 0..4 {
            comp.set_column(c, &full.u().column(20 + c));
        }
        let comp = SpectralBasis::from_parts(comp, vec![0.0; 4], BasisSource::Relatedness);
        for &angle in &[0.0, 0.5, 1.0, std::f64::consts::FRAC_PI_2] {
            let z = rotated_basis(&x, &comp, angle).unwrap();
            let gram = z.u().transpose() * z.u();
            assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
            let s = alignment_score(&z, &x).unwrap();
            assert_abs_diff_eq!(s, 4.0 * angle.cos().powi(2), epsilon = 1e-10);
        }
    }

    #[test]
    fn identical_spaces_have_near_zero_gap() {
        let x = left_singular_basis(&random_matrix(40, 40, 11), 6, BasisSource::Relatedness)
            .unwrap();
        let sim = GeneralizationSim::unit(6, 0.1, 200, 1);
        let report = simulate_generalization(&x, &x, &sim).unwrap();
        assert_abs_diff_eq!(report.avg_gap, 0.0, epsilon = 1e-12);
        assert!(report.avg_gap <= report.bound_value);
        assert_abs_diff_eq!(report.alignment, 6.0, epsilon = 1e-8);
    }

    #[test]
    fn gap_respects_bound_and_decreases_with_alignment() {
        let full = left_singular_basis(&random_matrix(60, 60, 12), 60, BasisSource::Relatedness)
            .unwrap();
        let mut x_cols = DMatrix::zeros(60, 8);
        let mut c_cols = DMatrix::zeros(60, 8);
        for c in 0..8 {
            x_cols.set_column(c, &full.u().column(c));
            c_cols.set_column(c, &full.u().column(40 + c));
        }
        let x = SpectralBasis::from_parts(x_cols, vec![1.0; 8], BasisSource::Relatedness);
        let comp = SpectralBasis::from_parts(c_cols, vec![0.0; 8], BasisSource::Relatedness);
        let mut gaps = Vec::new();
        let mut alignments = Vec::new();
        for (idx, &angle) in [1.3, 0.9, 0.5, 0.0].iter().enumerate() {
            let z = rotated_basis(&x, &comp, angle).unwrap();
            let sim = GeneralizationSim::unit(8, 0.05, 150, 20 + idx as u64);
            let report = simulate_generalization(&x, &z, &sim).unwrap();
            assert!(
                report.avg_gap <= report.bound_value + 3.0 * report.gap_std_error,
                "gap {} exceeds bound {} at angle {angle}",
                report.avg_gap,
                report.bound_value
            );
            gaps.push(report.avg_gap);
            alignments.push(report.alignment);
        }
        for w in alignments.windows(2) {
            assert!(w[0] < w[1]);
        }
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "gap rose with alignment: {gaps:?}");
        }
    }

    #[test]
    fn sim_rejects_bad_configs() {
        let x = left_singular_basis(&random_matrix(10, 10, 13), 3, BasisSource::Relatedness)
            .unwrap();
        let mut sim = GeneralizationSim::unit(2, 0.1, 10, 1);
        assert!(matches!(
            simulate_generalization(&x, &x, &sim),
            Err(SpectralError::InvalidSim(_))
        ));
        sim = GeneralizationSim::unit(3, 0.1, 0, 1);
        assert!(matches!(
            simulate_generalization(&x, &x, &sim),
            Err(SpectralError::InvalidSim(_))
        ));
        sim = GeneralizationSim::unit(3, -0.5, 10, 1);
        assert!(matches!(
            simulate_generalization(&x, &x, &sim),
            Err(SpectralError::InvalidSim(_))
        ));
    }

    #[test]
    fn embedding_and_estimate_views_have_expected_shape() {
        let emb = crate::embed::init_embeddings(5, 3, 1);
        let m = embedding_matrix(&emb.z);
        assert_eq!((m.nrows(), m.ncols()), (5, 3));
        assert_abs_diff_eq!(m[(2, 1)], emb.z.row(2)[1], epsilon = 0.0);

        let mut values = std::collections::BTreeMap::new();
        values.insert((0u32, 1u32), 2.5);
        let est = RelatednessEstimate::from_values(3, values, true).unwrap();
        let dense = estimate_matrix(&est);
        assert_abs_diff_eq!(dense[(0, 1)], 2.5, epsilon = 0.0);
        assert_abs_diff_eq!(dense[(1, 0)], 2.5, epsilon = 0.0);
        assert_abs_diff_eq!(dense[(2, 2)], 0.0, epsilon = 0.0);
    }
}
