//! Superiority regions and posterior decisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DeltaDraws;

/// Tolerance on the unit-sum constraint of compensatory weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// How the treatment differences on `K` outcomes combine into a single
/// superiority claim. Outcome indices are zero based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Superior when one designated outcome improves.
    Single(usize),
    /// Superior when at least one outcome improves.
    Any,
    /// Superior when every outcome improves.
    All,
    /// Superior when the weighted sum of differences is positive.
    Compensatory(Vec<f64>),
}

impl DecisionRule {
    /// Compensatory rule with validated weights.
    pub fn compensatory(weights: Vec<f64>) -> Result<Self> {
        let rule = DecisionRule::Compensatory(weights);
        rule.validate(rule.min_outcomes())?;
        Ok(rule)
    }

    /// Equal weights on `outcomes` outcomes.
    pub fn equal_weights(outcomes: usize) -> Self {
        DecisionRule::Compensatory(vec![1.0 / outcomes as f64; outcomes])
    }

    fn min_outcomes(&self) -> usize {
        match self {
            DecisionRule::Single(k) => k + 1,
            DecisionRule::Compensatory(w) => w.len(),
            _ => 1,
        }
    }

    /// Checks the rule against an outcome count.
    pub fn validate(&self, outcomes: usize) -> Result<()> {
        match self {
            DecisionRule::Single(k) if *k >= outcomes => {
                Err(Error::OutcomeOutOfRange { index: *k, outcomes })
            }
            DecisionRule::Compensatory(w) => {
                if w.len() != outcomes {
                    return Err(Error::DimensionMismatch { expected: outcomes, found: w.len() });
                }
                if let Some(x) = w.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return Err(Error::InvalidWeights(format!("weight {x} outside [0, 1]")));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::InvalidWeights(format!("weights sum to {total}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Short label used in reports, e.g. `single1`, `any`, `comp(0.5,0.5)`.
    pub fn label(&self) -> String {
        match self {
            DecisionRule::Single(k) => format!("single{}", k + 1),
            DecisionRule::Any => "any".into(),
            DecisionRule::All => "all".into(),
            DecisionRule::Compensatory(w) => {
                let parts: Vec<String> = w.iter().map(|x| format!("{x}")).collect();
                format!("comp({})", parts.join(","))
            }
        }
    }
}

/// Outcome of comparing a posterior probability against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub superior: bool,
    pub posterior_probability: f64,
    pub threshold: f64,
}

fn check_delta(rule: &DecisionRule, delta: &[f64]) -> Result<()> {
    rule.validate(delta.len())
}

/// Whether `delta` lies in the superiority region of `rule`.
///
/// Every boundary is strict: a difference of exactly zero is not an
/// improvement.
pub fn superiority_indicator(rule: &DecisionRule, delta: &[f64]) -> Result<bool> {
    check_delta(rule, delta)?;
    Ok(indicator_unchecked(rule, delta))
}

#[inline]
fn indicator_unchecked(rule: &DecisionRule, delta: &[f64]) -> bool {
    match rule {
        DecisionRule::Single(k) => delta[*k] > 0.0,
        DecisionRule::Any => delta.iter().any(|d| *d > 0.0),
        DecisionRule::All => delta.iter().all(|d| *d > 0.0),
        DecisionRule::Compensatory(w) => w.iter().zip(delta).map(|(w, d)| w * d).sum::<f64>() > 0.0,
    }
}

/// Share of draws inside the superiority region of `rule`.
///
/// For `Any` this is the mass of the union of the single-outcome regions
/// and for `All` the mass of their intersection.
pub fn region_probability(rule: &DecisionRule, draws: &DeltaDraws) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    rule.validate(draws.outcomes())?;
    let hits = draws.iter_rows().filter(|row| indicator_unchecked(rule, row)).count();
    Ok(hits as f64 / draws.len() as f64)
}

/// Posterior probability that drives the decision for `rule`.
///
/// `Single` and `Compensatory` use the mass of their region. `Any` takes the
/// largest and `All` the smallest of the per-outcome probabilities
/// `P(delta_k > 0)`.
pub fn superiority_probability(rule: &DecisionRule, draws: &DeltaDraws) -> Result<f64> {
    match rule {
        DecisionRule::Any | DecisionRule::All => {
            if draws.is_empty() {
                return Err(Error::EmptyDraws);
            }
            let per_outcome = outcome_probabilities(draws);
            let pick = if matches!(rule, DecisionRule::Any) { f64::max } else { f64::min };
            Ok(per_outcome.into_iter().reduce(pick).unwrap_or(0.0))
        }
        _ => region_probability(rule, draws),
    }
}

/// `P(delta_k > 0)` for every outcome.
pub fn outcome_probabilities(draws: &DeltaDraws) -> Vec<f64> {
    let mut hits = vec![0usize; draws.outcomes()];
    for row in draws.iter_rows() {
        for (h, d) in hits.iter_mut().zip(row) {
            *h += (*d > 0.0) as usize;
        }
    }
    let n = draws.len().max(1) as f64;
    hits.into_iter().map(|h| h as f64 / n).collect()
}

/// Default decision threshold: `1 - alpha/2` for `Any`, `1 - alpha` otherwise.
pub fn decision_threshold(rule: &DecisionRule, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(match rule {
        DecisionRule::Any => 1.0 - alpha / 2.0,
        _ => 1.0 - alpha,
    })
}

/// Superior iff `prob` strictly exceeds `threshold`.
pub fn decide(prob: f64, threshold: f64) -> Decision {
    Decision { superior: prob > threshold, posterior_probability: prob, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(delta: &[f64], copies: usize) -> DeltaDraws {
        DeltaDraws::from_rows(&vec![delta.to_vec(); copies]).unwrap()
    }

    #[test]
    fn region_membership() {
        let d = [0.1, -0.01];
        assert!(!superiority_indicator(&DecisionRule::All, &d).unwrap());
        assert!(superiority_indicator(&DecisionRule::Any, &d).unwrap());
        let ce = DecisionRule::equal_weights(2);
        assert!(!superiority_indicator(&ce, &[0.2, -0.4]).unwrap());
        assert!(!superiority_indicator(&DecisionRule::Single(0), &[0.0, 1.0]).unwrap());
    }

    #[test]
    fn unit_weight_matches_single() {
        let e1 = DecisionRule::Compensatory(vec![1.0, 0.0]);
        for d in [[0.3, -0.9], [-0.1, 0.5], [0.0, 0.2]] {
            assert_eq!(
                superiority_indicator(&e1, &d).unwrap(),
                superiority_indicator(&DecisionRule::Single(0), &d).unwrap()
            );
        }
    }

    #[test]
    fn point_mass_probabilities() {
        let draws = point(&[0.2, 0.2], 10);
        for rule in [DecisionRule::All, DecisionRule::Any, DecisionRule::Single(0), DecisionRule::equal_weights(2)] {
            assert_eq!(superiority_probability(&rule, &draws).unwrap(), 1.0);
        }
    }

    #[test]
    fn any_and_all_use_marginal_extremes() {
        let draws = DeltaDraws::from_rows(&[
            vec![0.1, -0.1],
            vec![-0.1, 0.1],
            vec![0.1, 0.1],
            vec![-0.1, -0.1],
        ])
        .unwrap();
        assert_eq!(superiority_probability(&DecisionRule::Any, &draws).unwrap(), 0.5);
        assert_eq!(region_probability(&DecisionRule::Any, &draws).unwrap(), 0.75);
        assert_eq!(superiority_probability(&DecisionRule::All, &draws).unwrap(), 0.5);
        assert_eq!(region_probability(&DecisionRule::All, &draws).unwrap(), 0.25);
    }

    #[test]
    fn thresholds() {
        assert_eq!(decision_threshold(&DecisionRule::Any, 0.05).unwrap(), 0.975);
        assert_eq!(decision_threshold(&DecisionRule::equal_weights(2), 0.05).unwrap(), 0.95);
        assert!((decision_threshold(&DecisionRule::All, 0.10).unwrap() - 0.90).abs() < 1e-15);
        assert!(decision_threshold(&DecisionRule::All, 0.0).is_err());
    }

    #[test]
    fn strict_decisions() {
        assert!(decide(0.951, 0.95).superior);
        assert!(!decide(0.95, 0.95).superior);
        assert!(!decide(0.0, 0.9968).superior);
    }

    #[test]
    fn invalid_rules() {
        assert!(DecisionRule::compensatory(vec![0.6, 0.6]).is_err());
        assert!(DecisionRule::compensatory(vec![1.2, -0.2]).is_err());
        assert!(superiority_indicator(&DecisionRule::Single(2), &[0.1, 0.1]).is_err());
        assert!(superiority_indicator(&DecisionRule::equal_weights(3), &[0.1, 0.1]).is_err());
        let empty = DeltaDraws::from_rows(&[]);
        assert!(empty.is_err());
    }
}
