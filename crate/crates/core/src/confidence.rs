//! Finite-sample confidence bounds on the relatedness estimate.
//!
//! The pair count N_ij is a sum of n Bernoulli indicators, so a Chernoff
//! argument bounds the probability that an independent pair shows spurious
//! relatedness: P(R <= -eps) <= exp(-n * KL(m * e^{-eps} || m)) with
//! m = N_i * N_j / n^2 the plug-in null mean. Inverting the KL ball around
//! the observed N_ij / n gives confidence endpoints on R itself, and pairs
//! whose lower endpoint cannot rule out R <= 0 are filtered as false
//! associations.

use std::collections::HashSet;

use thiserror::Error;

use crate::cooccur::CooccurrenceTable;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("table is empty")]
    EmptyTable,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("null mean {null_mean} for pair ({i}, {j}) exceeds 1")]
    NullMeanExceedsOne { i: u32, j: u32, null_mean: f64 },
    #[error("observed pair ({0}, {1}) has a zero marginal count; use a role convention that covers both roles")]
    ZeroMarginal(u32, u32),
}

/// KL divergence between Bernoulli(a) and Bernoulli(b).
///
/// Conventions: 0*log(0) = 0, so the divergence is 0 whenever a == b; it is
/// +infinity when b is 0 or 1 and a differs. Panics outside [0, 1].
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b),
        "bernoulli_kl arguments must lie in [0, 1], got a={a}, b={b}"
    );
    if a == b {
        return 0.0;
    }
    if b == 0.0 || b == 1.0 {
        return f64::INFINITY;
    }
    let mut kl = 0.0;
    if a > 0.0 {
        kl += a * (a / b).ln();
    }
    if a < 1.0 {
        kl += (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
    }
    kl
}

/// Which endpoint of the KL ball {p : KL(mu_hat || p) <= t} to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionDirection {
    Lower,
    Upper,
}

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITERS: usize = 200;

/// Inverts the Bernoulli KL divergence by bisection: returns the smallest
/// (`Lower`) or largest (`Upper`) p with KL(mu_hat || p) <= t.
pub fn invert_kl(mu_hat: f64, t: f64, direction: InversionDirection) -> f64 {
    assert!(
        (0.0..=1.0).contains(&mu_hat),
        "mu_hat must lie in [0, 1], got {mu_hat}"
    );
    assert!(t >= 0.0, "radius t must be non-negative, got {t}");
    if t == 0.0 {
        return mu_hat;
    }
    match direction {
        InversionDirection::Upper => {
            if mu_hat == 1.0 {
                return 1.0;
            }
            // KL(mu_hat || p) grows from 0 to +inf as p goes from mu_hat to 1.
            let mut lo = mu_hat;
            let mut hi = 1.0;
            for _ in 0..BISECTION_MAX_ITERS {
                if hi - lo <= BISECTION_TOL {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if bernoulli_kl(mu_hat, mid) <= t {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
        InversionDirection::Lower => {
            if mu_hat == 0.0 {
                return 0.0;
            }
            // KL(mu_hat || p) grows from 0 to +inf as p goes from mu_hat to 0.
            let mut lo = 0.0;
            let mut hi = mu_hat;
            for _ in 0..BISECTION_MAX_ITERS {
                if hi - lo <= BISECTION_TOL {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if bernoulli_kl(mu_hat, mid) <= t {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    }
}

/// Chernoff bound on P(R_ij <= -epsilon) for an independent pair, using the
/// observed marginals as the plug-in null mean.
pub fn tail_bound(
    table: &CooccurrenceTable,
    i: u32,
    j: u32,
    epsilon: f64,
) -> Result<f64, ConfidenceError> {
    if table.n() == 0 {
        return Err(ConfidenceError::EmptyTable);
    }
    if epsilon <= 0.0 {
        return Err(ConfidenceError::InvalidEpsilon(epsilon));
    }
    let n = table.n() as f64;
    let null_mean = table.item_count(i) as f64 * table.item_count(j) as f64 / (n * n);
    if null_mean > 1.0 {
        return Err(ConfidenceError::NullMeanExceedsOne { i, j, null_mean });
    }
    let shifted = null_mean * (-epsilon).exp();
    Ok((-n * bernoulli_kl(shifted, null_mean)).exp())
}

/// Confidence endpoint on R_ij at significance `alpha`: inverts the KL ball
/// of radius log(1/alpha)/n around N_ij/n and maps the endpoint through
/// log(n^2 p / (N_i N_j)). At alpha = 1 both endpoints equal the estimate.
pub fn bound_on_relatedness(
    table: &CooccurrenceTable,
    i: u32,
    j: u32,
    alpha: f64,
    direction: InversionDirection,
) -> Result<f64, ConfidenceError> {
    if table.n() == 0 {
        return Err(ConfidenceError::EmptyTable);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ConfidenceError::InvalidAlpha(alpha));
    }
    let n = table.n() as f64;
    let mu_hat = table.pair_count(i, j) as f64 / n;
    let t = (1.0 / alpha).ln() / n;
    let p = invert_kl(mu_hat, t, direction);
    let denom = table.item_count(i) as f64 * table.item_count(j) as f64;
    if p == 0.0 || denom == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((n * n * p / denom).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Keep,
    Drop,
}

/// Per-pair record of the confidence computation behind a filter decision.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConfidenceReport {
    pub i: u32,
    pub j: u32,
    pub count: u64,
    pub mu_hat: f64,
    pub null_mean: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub relatedness: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

/// A filtered table plus the evidence for every decision.
#[derive(Debug)]
pub struct FilterOutcome {
    pub table: CooccurrenceTable,
    pub reports: Vec<ConfidenceReport>,
    pub dropped: HashSet<(u32, u32)>,
}

impl FilterOutcome {
    pub fn drop_fraction(&self) -> f64 {
        if self.reports.is_empty() {
            return 0.0;
        }
        self.dropped.len() as f64 / self.reports.len() as f64
    }
}

/// Drops every stored pair whose relatedness bound cannot rule out
/// independence (bound <= 0) at the given confidence level.
///
/// The bound is evaluated at significance 1 - confidence, so raising the
/// confidence widens the KL ball and the drop sets are nested. The default
/// `Lower` direction asks for evidence that R > 0; `Upper` reproduces the
/// literal best-case endpoint and drops far less.
pub fn filter_false_associations(
    table: &CooccurrenceTable,
    confidence: f64,
    direction: InversionDirection,
) -> Result<FilterOutcome, ConfidenceError> {
    if table.n() == 0 {
        return Err(ConfidenceError::EmptyTable);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(ConfidenceError::InvalidConfidence(confidence));
    }
    let alpha = 1.0 - confidence;
    let n = table.n() as f64;
    let t = (1.0 / alpha).ln() / n;
    let mut reports = Vec::with_capacity(table.num_stored_pairs());
    let mut dropped = HashSet::new();
    for ((i, j), count) in table.pairs() {
        let mu_hat = count as f64 / n;
        let denom = table.item_count(i) as f64 * table.item_count(j) as f64;
        if denom == 0.0 {
            return Err(ConfidenceError::ZeroMarginal(i, j));
        }
        let p_lower = invert_kl(mu_hat, t, InversionDirection::Lower);
        let p_upper = invert_kl(mu_hat, t, InversionDirection::Upper);
        let endpoint = match direction {
            InversionDirection::Lower => p_lower,
            InversionDirection::Upper => p_upper,
        };
        let bound = if endpoint == 0.0 {
            f64::NEG_INFINITY
        } else {
            (n * n * endpoint / denom).ln()
        };
        let verdict = if bound <= 0.0 {
            Verdict::Drop
        } else {
            Verdict::Keep
        };
        if verdict == Verdict::Drop {
            dropped.insert((i, j));
        }
        reports.push(ConfidenceReport {
            i,
            j,
            count,
            mu_hat,
            null_mean: denom / (n * n),
            p_lower,
            p_upper,
            relatedness: (n * count as f64 / denom).ln(),
            bound,
            verdict,
        });
    }
    Ok(FilterOutcome {
        table: table.without_pairs(&dropped),
        reports,
        dropped,
    })
}
