//! Efficiency weights for the compensatory rule.
//!
//! Under a normal approximation `delta ~ N(mu, Sigma)` the evidence for a
//! weight vector is `Phi(w . mu / sqrt(w' Sigma w))`. The ratio is scale
//! invariant, so the best nonnegative direction is a KKT point
//! `w_S ∝ Sigma_S^{-1} mu_S` on some support `S`; all supports are
//! enumerated and the best feasible one is kept.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{delta_draws, has_success, posterior_update, sample_dirichlet, DirichletParams, JointCounts};
use crate::normal::normal_cdf;

/// Per-cell prior mass used when turning counts into moments.
pub const MOMENT_PRIOR: f64 = 0.01;

/// Supports are enumerated exhaustively up to this many outcomes.
pub const MAX_ENUMERATED_OUTCOMES: usize = 16;

/// Mean and covariance of the treatment differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMoments {
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl DeltaMoments {
    pub fn new(mu: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let k = mu.len();
        if k == 0 {
            return Err(Error::InvalidArgument("moments need at least one outcome".into()));
        }
        if cov.len() != k || cov.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: cov.len() });
        }
        for a in 0..k {
            if cov[a][a] < 0.0 {
                return Err(Error::InvalidArgument(format!("variance {} is negative", cov[a][a])));
            }
            for b in 0..a {
                if (cov[a][b] - cov[b][a]).abs() > 1e-12 * (1.0 + cov[a][b].abs()) {
                    return Err(Error::InvalidArgument("covariance matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { mu, cov })
    }

    /// Moments from uncorrelated outcomes with the given variances.
    pub fn independent(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        let k = mu.len();
        let cov = (0..k).map(|a| (0..k).map(|b| if a == b { sigma2[a] } else { 0.0 }).collect()).collect();
        Self::new(mu, cov)
    }

    pub fn outcomes(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma2(&self) -> Vec<f64> {
        (0..self.outcomes()).map(|k| self.cov[k][k]).collect()
    }

    fn matrix(&self) -> DMatrix<f64> {
        let k = self.outcomes();
        DMatrix::from_fn(k, k, |a, b| self.cov[a][b])
    }
}

fn reference_posteriors(s_e: &JointCounts, s_c: &JointCounts) -> Result<(DirichletParams, DirichletParams)> {
    if s_e.as_slice().len() != s_c.as_slice().len() {
        return Err(Error::DimensionMismatch { expected: s_e.as_slice().len(), found: s_c.as_slice().len() });
    }
    if s_e.total() == 0 || s_c.total() == 0 {
        return Err(Error::EmptyCounts);
    }
    let prior = DirichletParams::symmetric(s_e.outcomes(), MOMENT_PRIOR)?;
    Ok((posterior_update(&prior, s_e)?, posterior_update(&prior, s_c)?))
}

/// Monte Carlo moments of `delta` from `draws` posterior samples per arm,
/// using a near-zero reference prior.
pub fn estimate_moments<R: Rng + ?Sized>(
    s_e: &JointCounts,
    s_c: &JointCounts,
    draws: usize,
    rng: &mut R,
) -> Result<DeltaMoments> {
    let (post_e, post_c) = reference_posteriors(s_e, s_c)?;
    let d_e = sample_dirichlet(&post_e, draws, rng)?;
    let d_c = sample_dirichlet(&post_c, draws, rng)?;
    let delta = delta_draws(&d_e, &d_c)?;
    let k = delta.outcomes();
    let mu = delta.mean();
    let mut cov = vec![vec![0.0; k]; k];
    for row in delta.iter_rows() {
        for a in 0..k {
            for b in 0..=a {
                cov[a][b] += (row[a] - mu[a]) * (row[b] - mu[b]);
            }
        }
    }
    let denom = (delta.len().max(2) - 1) as f64;
    for a in 0..k {
        for b in 0..=a {
            cov[a][b] /= denom;
            cov[b][a] = cov[a][b];
        }
    }
    DeltaMoments::new(mu, cov)
}

/// Exact moments of `delta` under the reference-prior posteriors.
///
/// For a Dirichlet with total `A` and aggregated masses `a_k`, `a_kl`:
/// `Cov(theta_k, theta_l) = (A a_kl - a_k a_l) / (A^2 (A + 1))`.
pub fn posterior_moments(s_e: &JointCounts, s_c: &JointCounts) -> Result<DeltaMoments> {
    let (post_e, post_c) = reference_posteriors(s_e, s_c)?;
    let k = post_e.outcomes();
    let arm = |p: &DirichletParams| {
        let alpha = p.as_slice();
        let total = p.total();
        let mass = |a: usize, b: usize| -> f64 {
            alpha
                .iter()
                .enumerate()
                .filter(|(q, _)| has_success(*q, a, k) && has_success(*q, b, k))
                .map(|(_, x)| x)
                .sum()
        };
        let mean: Vec<f64> = (0..k).map(|a| mass(a, a) / total).collect();
        let cov: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| (total * mass(a, b) - mass(a, a) * mass(b, b)) / (total * total * (total + 1.0)))
                    .collect()
            })
            .collect();
        (mean, cov)
    };
    let (m_e, c_e) = arm(&post_e);
    let (m_c, c_c) = arm(&post_c);
    let mu = m_e.iter().zip(&m_c).map(|(e, c)| e - c).collect();
    let cov = (0..k).map(|a| (0..k).map(|b| c_e[a][b] + c_c[a][b]).collect()).collect();
    DeltaMoments::new(mu, cov)
}

/// `Phi(w . mu / sqrt(w' Sigma w))`.
///
/// Weights must be finite and nonnegative; they need not sum to one.
pub fn compensatory_evidence(weights: &[f64], moments: &DeltaMoments) -> Result<f64> {
    let k = moments.outcomes();
    if weights.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: weights.len() });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
    }
    Ok(normal_cdf(standardized_effect(weights, moments)?))
}

/// `w . mu / sqrt(w' Sigma w)`, the argument of [`compensatory_evidence`].
fn standardized_effect(weights: &[f64], moments: &DeltaMoments) -> Result<f64> {
    let k = moments.outcomes();
    let mean: f64 = weights.iter().zip(&moments.mu).map(|(w, m)| w * m).sum();
    let mut var = 0.0;
    for a in 0..k {
        for b in 0..k {
            var += weights[a] * weights[b] * moments.cov[a][b];
        }
    }
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok(mean / var.sqrt())
}

/// Weights on the unit simplex that maximize [`compensatory_evidence`].
pub fn optimize_weights(moments: &DeltaMoments) -> Result<Vec<f64>> {
    let k = moments.outcomes();
    if k > MAX_ENUMERATED_OUTCOMES {
        return Err(Error::InvalidArgument(format!("at most {MAX_ENUMERATED_OUTCOMES} outcomes are supported")));
    }
    let sigma = moments.matrix();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let s = support.len();
        let sub = DMatrix::from_fn(s, s, |a, b| sigma[(support[a], support[b])]);
        let rhs = DVector::from_iterator(s, support.iter().map(|&i| moments.mu[i]));
        let Some(solution) = sub.lu().solve(&rhs) else { continue };
        if solution.iter().any(|x| !x.is_finite() || *x < 0.0) {
            continue;
        }
        let total: f64 = solution.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        let mut w = vec![0.0; k];
        for (&i, x) in support.iter().zip(solution.iter()) {
            w[i] = x / total;
        }
        // Ranked on the standardized effect; the normal tail saturates.
        let Ok(value) = standardized_effect(&w, moments) else { continue };
        if value > 0.0 && best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, w));
        }
    }
    best.map(|(_, w)| w).ok_or(Error::NoPositiveDirection)
}
