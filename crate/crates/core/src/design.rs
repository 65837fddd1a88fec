//! A priori sample sizes per arm for each decision rule.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgm::DgmSpec;
use crate::error::{Error, Result};
use crate::model::{margins_of, CellProbabilities};
use crate::normal::{mvn_cdf, normal_quantile};
use crate::rules::DecisionRule;

/// Largest per-arm sample size the search will consider.
pub const MAX_SAMPLE_SIZE: u64 = 1_000_000;

const EFFECT_EPS: f64 = 1e-12;
const CEIL_SLACK: f64 = 1e-9;

/// Error rates plus anticipated cell probabilities in both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    pub alpha: f64,
    pub beta: f64,
    pub phi_e: CellProbabilities,
    pub phi_c: CellProbabilities,
}

/// Variance used for the test statistic under the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    /// Arm-specific variances under the alternative.
    Unpooled,
    /// Variance of the pooled proportion `2 p (1 - p)` on the critical value.
    PooledNull,
}

impl DesignTarget {
    pub fn new(alpha: f64, beta: f64, phi_e: CellProbabilities, phi_c: CellProbabilities) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside (0, 1)")));
            }
        }
        if phi_e.cells() != phi_c.cells() {
            return Err(Error::DimensionMismatch { expected: phi_e.cells(), found: phi_c.cells() });
        }
        Ok(Self { alpha, beta, phi_e, phi_c })
    }

    pub fn from_dgm(dgm: &DgmSpec, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, dgm.phi_e.clone(), dgm.phi_c.clone())
    }

    pub fn outcomes(&self) -> usize {
        self.phi_e.outcomes()
    }

    /// Anticipated treatment differences.
    pub fn delta(&self) -> Vec<f64> {
        let e = margins_of(&self.phi_e);
        let c = margins_of(&self.phi_c);
        e.as_slice().iter().zip(c.as_slice()).map(|(e, c)| e - c).collect()
    }

    fn z_sum(&self) -> f64 {
        normal_quantile(1.0 - self.alpha) + normal_quantile(1.0 - self.beta)
    }
}

/// Covariance matrix of the `K` success indicators under `phi`.
pub fn outcome_covariance(phi: &CellProbabilities) -> DMatrix<f64> {
    let k = phi.outcomes();
    let theta = margins_of(phi);
    let t = theta.as_slice();
    DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            t[a] * (1.0 - t[a])
        } else {
            phi.joint_success(a, b) - t[a] * t[b]
        }
    })
}

fn ceil_n(x: f64) -> u64 {
    (x - CEIL_SLACK).ceil().max(1.0) as u64
}

fn check_effect(effect: f64) -> Result<()> {
    if effect.abs() < EFFECT_EPS {
        return Err(Error::ZeroEffect);
    }
    if effect < 0.0 {
        return Err(Error::InfeasibleRule(format!("anticipated effect {effect} favours control")));
    }
    Ok(())
}

/// Two-proportion z-test sample size for outcome `k`:
/// `(z_a + z_b)^2 (p_E q_E + p_C q_C) / delta_k^2`, rounded up.
pub fn sample_size_single(target: &DesignTarget, k: usize) -> Result<u64> {
    let mut w = vec![0.0; target.outcomes()];
    *w.get_mut(k).ok_or(Error::OutcomeOutOfRange { index: k, outcomes: target.outcomes() })? = 1.0;
    sample_size_compensatory(target, &w)
}

/// Normal-approximation sample size for the weighted difference `w . delta`
/// with arm variances `w' Sigma_j w`.
pub fn sample_size_compensatory(target: &DesignTarget, weights: &[f64]) -> Result<u64> {
    DecisionRule::Compensatory(weights.to_vec()).validate(target.outcomes())?;
    let effect: f64 = weights.iter().zip(target.delta()).map(|(w, d)| w * d).sum();
    check_effect(effect)?;
    let w = nalgebra::DVector::from_column_slice(weights);
    let v_e = (w.transpose() * outcome_covariance(&target.phi_e) * &w)[(0, 0)];
    let v_c = (w.transpose() * outcome_covariance(&target.phi_c) * &w)[(0, 0)];
    Ok(ceil_n(target.z_sum().powi(2) * (v_e + v_c) / effect.powi(2)))
}

/// Sample size for `Any` or `All` from the joint normal approximation of
/// the per-outcome z statistics, with the rule's default variance
/// convention: pooled under the null for `All`, unpooled for `Any`.
pub fn sample_size_mvn(rule: &DecisionRule, target: &DesignTarget) -> Result<u64> {
    let convention = match rule {
        DecisionRule::All => VarianceConvention::PooledNull,
        _ => VarianceConvention::Unpooled,
    };
    sample_size_mvn_with(rule, target, convention)
}

/// Approximate power of `Any` or `All` at `n` subjects per arm.
pub fn mvn_power(rule: &DecisionRule, target: &DesignTarget, n: u64, convention: VarianceConvention) -> Result<f64> {
    let k = target.outcomes();
    let delta = target.delta();
    let sigma = outcome_covariance(&target.phi_e) + outcome_covariance(&target.phi_c);
    let sd: Vec<f64> = (0..k).map(|i| sigma[(i, i)].sqrt()).collect();
    if sd.iter().any(|s| *s <= 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let corr = DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { sigma[(a, b)] / (sd[a] * sd[b]) });
    let (critical, upper_tail) = match rule {
        DecisionRule::All => (normal_quantile(1.0 - target.alpha), true),
        DecisionRule::Any => (normal_quantile(1.0 - target.alpha / 2.0), false),
        other => {
            return Err(Error::InvalidArgument(format!("{} is not sized by the joint normal method", other.label())))
        }
    };
    let theta_e = margins_of(&target.phi_e);
    let theta_c = margins_of(&target.phi_c);
    let root_n = (n as f64).sqrt();
    let thresholds: Vec<f64> = (0..k)
        .map(|i| {
            let null_sd = match convention {
                VarianceConvention::Unpooled => sd[i],
                VarianceConvention::PooledNull => {
                    let p = (theta_e.as_slice()[i] + theta_c.as_slice()[i]) / 2.0;
                    (2.0 * p * (1.0 - p)).sqrt()
                }
            };
            (critical * null_sd - delta[i] * root_n) / sd[i]
        })
        .collect();
    if upper_tail {
        let neg: Vec<f64> = thresholds.iter().map(|t| -t).collect();
        mvn_cdf(&neg, &corr)
    } else {
        Ok(1.0 - mvn_cdf(&thresholds, &corr)?)
    }
}

/// [`sample_size_mvn`] with an explicit variance convention. Searches
/// upward from `n = 2`.
pub fn sample_size_mvn_with(rule: &DecisionRule, target: &DesignTarget, convention: VarianceConvention) -> Result<u64> {
    let delta = target.delta();
    match rule {
        DecisionRule::All if delta.iter().any(|d| *d <= EFFECT_EPS) => {
            return Err(Error::InfeasibleRule("every anticipated difference must be positive".into()))
        }
        DecisionRule::Any if delta.iter().all(|d| *d <= EFFECT_EPS) => {
            return Err(Error::InfeasibleRule("at least one anticipated difference must be positive".into()))
        }
        _ => {}
    }
    let goal = 1.0 - target.beta;
    for n in 2..=MAX_SAMPLE_SIZE {
        if mvn_power(rule, target, n, convention)? >= goal {
            return Ok(n);
        }
    }
    Err(Error::InfeasibleRule(format!("power target not reached below {MAX_SAMPLE_SIZE}")))
}

/// Sample size for any rule: z-test for `Single`, weighted normal
/// approximation for `Compensatory`, joint normal for `Any` and `All`.
pub fn sample_size(rule: &DecisionRule, target: &DesignTarget) -> Result<u64> {
    match rule {
        DecisionRule::Single(k) => sample_size_single(target, *k),
        DecisionRule::Compensatory(w) => sample_size_compensatory(target, w),
        _ => sample_size_mvn(rule, target),
    }
}
