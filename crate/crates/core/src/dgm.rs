//! Two-outcome data-generating mechanisms used for design and simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cell_probs_from_margins, CellProbabilities, JointCounts, MarginalProbabilities};
use crate::rules::DecisionRule;

/// True parameters of both arms: margins, a shared correlation, and the
/// cell probabilities they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmSpec {
    pub id: String,
    pub theta_e: MarginalProbabilities,
    pub theta_c: MarginalProbabilities,
    pub rho: f64,
    pub phi_e: CellProbabilities,
    pub phi_c: CellProbabilities,
}

impl DgmSpec {
    pub fn new(id: impl Into<String>, theta_e: [f64; 2], theta_c: [f64; 2], rho: f64) -> Result<Self> {
        let theta_e = MarginalProbabilities::new(theta_e.to_vec())?;
        let theta_c = MarginalProbabilities::new(theta_c.to_vec())?;
        let phi_e = cell_probs_from_margins(&theta_e, rho)?;
        let phi_c = cell_probs_from_margins(&theta_c, rho)?;
        Ok(Self { id: id.into(), theta_e, theta_c, rho, phi_e, phi_c })
    }

    /// True treatment difference per outcome.
    pub fn delta(&self) -> Vec<f64> {
        self.theta_e.as_slice().iter().zip(self.theta_c.as_slice()).map(|(e, c)| e - c).collect()
    }

    /// Group number, the part of the id before the dot.
    pub fn group(&self) -> u32 {
        self.id.split('.').next().and_then(|g| g.parse().ok()).unwrap_or(0)
    }

    /// Whether the true difference lies in the superiority region of `rule`.
    pub fn is_superior_under(&self, rule: &DecisionRule) -> Result<bool> {
        crate::rules::superiority_indicator(rule, &self.delta())
    }

    /// Same margins with a different id and shifted treatment differences:
    /// `delta_shift` is added to the experimental arm and subtracted from
    /// the control arm, half each.
    pub fn with_delta_shift(&self, delta_shift: f64) -> Result<Self> {
        let half = delta_shift / 2.0;
        let e = self.theta_e.as_slice();
        let c = self.theta_c.as_slice();
        Self::new(
            format!("{}{:+}", self.id, delta_shift),
            [e[0] + half, e[1] + half],
            [c[0] - half, c[1] - half],
            self.rho,
        )
    }
}

const GROUPS: [([f64; 2], [f64; 2]); 8] = [
    ([0.40, 0.40], [0.60, 0.60]),
    ([0.50, 0.50], [0.50, 0.50]),
    ([0.55, 0.55], [0.45, 0.45]),
    ([0.60, 0.60], [0.40, 0.40]),
    ([0.70, 0.70], [0.30, 0.30]),
    ([0.70, 0.50], [0.30, 0.50]),
    ([0.60, 0.30], [0.40, 0.70]),
    ([0.62, 0.54], [0.38, 0.46]),
];

/// Correlations crossed with every effect pattern; `g.1`, `g.2`, `g.3`.
pub const CORRELATIONS: [f64; 3] = [-0.3, 0.0, 0.3];

/// The 24 reference mechanisms: eight effect patterns crossed with three
/// correlations.
pub fn dgm_table() -> Vec<DgmSpec> {
    GROUPS
        .iter()
        .enumerate()
        .flat_map(|(g, (te, tc))| {
            CORRELATIONS.iter().enumerate().map(move |(r, rho)| {
                DgmSpec::new(format!("{}.{}", g + 1, r + 1), *te, *tc, *rho).expect("reference mechanisms are feasible")
            })
        })
        .collect()
}

/// Looks up a reference mechanism by id such as `"4.2"`.
pub fn dgm_by_id(id: &str) -> Result<DgmSpec> {
    dgm_table()
        .into_iter()
        .find(|d| d.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown data-generating mechanism {id:?}")))
}

/// Group whose true difference sits on the null boundary of `rule`:
/// group 6 for `All`, group 2 otherwise.
pub fn least_favorable_dgm(rule: &DecisionRule) -> u32 {
    match rule {
        DecisionRule::All => 6,
        _ => 2,
    }
}

/// Expected cell frequencies `n * phi`, rounded to whole subjects with the
/// remainder assigned to the largest fractional parts.
pub fn expected_counts(phi: &CellProbabilities, n: u64) -> JointCounts {
    let raw: Vec<f64> = phi.as_slice().iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<u64> = raw.iter().map(|x| x.floor() as u64).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n.saturating_sub(counts.iter().sum());
    for &q in order.iter().take(short as usize) {
        counts[q] += 1;
    }
    JointCounts::new(counts).expect("cell count is a power of two")
}
