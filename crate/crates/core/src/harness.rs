//! Replicated trial simulation over the reference mechanisms.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{sample_size, DesignTarget};
use crate::dgm::{dgm_table, DgmSpec};
use crate::error::{Error, Result};
use crate::model::{cell_probs_from_margins, margins_of, prior_from_spec, CellProbabilities, MarginalProbabilities, PriorSpec};
use crate::rules::{decision_threshold, DecisionRule};
use crate::trial::{
    equal_ratios, make_schedule, replication_rng, run_sequential_trial, AdaptiveSpec, DesignKind, DesignSpec,
    ScheduleSpec, Screening, SimulatedSource, FIXED_DRAWS, SEQUENTIAL_DRAWS,
};

/// Per-arm sample size for mechanisms that should not yield superiority.
pub const NULL_SAMPLE_SIZE: u64 = 1000;
/// Constant threshold of the three-look group-sequential design.
pub const GROUP_SEQUENTIAL_THRESHOLD: f64 = 0.98;
/// Calibrated threshold of the default adaptive schedule.
pub const ADAPTIVE_THRESHOLD: f64 = 0.9968;

/// The six rules compared on the reference grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridRule {
    Single,
    Any,
    All,
    /// Compensatory, equal weights.
    CE,
    /// Compensatory, unequal weights tuned for uncorrelated outcomes.
    CUU,
    /// Compensatory, unequal weights tuned for correlated outcomes.
    CUC,
}

impl GridRule {
    pub const ALL: [GridRule; 6] =
        [GridRule::Single, GridRule::Any, GridRule::All, GridRule::CE, GridRule::CUU, GridRule::CUC];

    pub fn label(self) -> &'static str {
        match self {
            GridRule::Single => "Single",
            GridRule::Any => "Any",
            GridRule::All => "All",
            GridRule::CE => "C-E",
            GridRule::CUU => "C-UU",
            GridRule::CUC => "C-UC",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        GridRule::ALL.into_iter().find(|r| r.label().eq_ignore_ascii_case(label))
    }

    /// Rule applied to the posterior.
    pub fn decision_rule(self) -> DecisionRule {
        match self {
            GridRule::Single => DecisionRule::Single(0),
            GridRule::Any => DecisionRule::Any,
            GridRule::All => DecisionRule::All,
            GridRule::CE => DecisionRule::Compensatory(vec![0.5, 0.5]),
            GridRule::CUU => DecisionRule::Compensatory(vec![0.76, 0.24]),
            GridRule::CUC => DecisionRule::Compensatory(vec![0.64, 0.36]),
        }
    }

    /// Rule used for the a priori sample size. The uncorrelated unequal
    /// weights were sized with their rounded form `(0.75, 0.25)`.
    pub fn sizing_rule(self) -> DecisionRule {
        match self {
            GridRule::CUU => DecisionRule::Compensatory(vec![0.75, 0.25]),
            other => other.decision_rule(),
        }
    }
}

/// Prior sets used for the sensitivity comparison, numbered 1 to 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorSet {
    /// 0.01 per cell.
    Reference,
    /// 0.5 per cell.
    Jeffreys,
    /// 20 prior subjects at the true cells.
    True,
    /// 20 prior subjects, difference 0.10 smaller than the truth.
    Smaller,
    /// 20 prior subjects, difference 0.10 larger than the truth.
    Larger,
    /// 20 prior subjects with the arms swapped.
    Opposite,
}

impl PriorSet {
    pub fn from_index(i: u8) -> Option<Self> {
        use PriorSet::*;
        [Reference, Jeffreys, True, Smaller, Larger, Opposite].get(i.checked_sub(1)? as usize).copied()
    }

    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    /// Prior of each arm for mechanism `dgm`.
    pub fn priors(self, dgm: &DgmSpec) -> Result<(PriorSpec, PriorSpec)> {
        const N0: f64 = 20.0;
        let shifted = |theta: &MarginalProbabilities, by: f64| -> Result<CellProbabilities> {
            let moved = MarginalProbabilities::new(theta.as_slice().iter().map(|t| t + by).collect())?;
            cell_probs_from_margins(&moved, dgm.rho)
        };
        Ok(match self {
            PriorSet::Reference => (PriorSpec::reference(2), PriorSpec::reference(2)),
            PriorSet::Jeffreys => (PriorSpec::jeffreys(2), PriorSpec::jeffreys(2)),
            PriorSet::True => (PriorSpec::new(N0, dgm.phi_e.clone())?, PriorSpec::new(N0, dgm.phi_c.clone())?),
            PriorSet::Smaller => (
                PriorSpec::new(N0, shifted(&dgm.theta_e, -0.05)?)?,
                PriorSpec::new(N0, shifted(&dgm.theta_c, 0.05)?)?,
            ),
            PriorSet::Larger => (
                PriorSpec::new(N0, shifted(&dgm.theta_e, 0.05)?)?,
                PriorSpec::new(N0, shifted(&dgm.theta_c, -0.05)?)?,
            ),
            PriorSet::Opposite => (PriorSpec::new(N0, dgm.phi_c.clone())?, PriorSpec::new(N0, dgm.phi_e.clone())?),
        })
    }
}

/// Identifies one simulated condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub dgm: String,
    pub rule: String,
    pub design: DesignKind,
    pub prior: u8,
    /// Fixed-design sample size per arm, or the sizing basis of a
    /// sequential schedule.
    pub n: u64,
}

impl Condition {
    pub fn key(&self) -> String {
        format!("{}|{}|{:?}|{}|{}", self.dgm, self.rule, self.design, self.prior, self.n)
    }
}

/// Aggregated operating characteristics of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub condition: Condition,
    pub reps: usize,
    /// Share of replications concluding superiority.
    pub rate: f64,
    /// Mean per-arm sample size at stop among replications concluding
    /// superiority.
    pub mean_n: Option<f64>,
    /// Mean posterior-mean difference at stop minus the true difference.
    pub bias: Vec<f64>,
    /// Same as `bias` with raw observed proportions in place of the
    /// posterior mean.
    pub observed_bias: Vec<f64>,
    /// Binomial Monte Carlo standard error of `rate`.
    pub se: f64,
}

/// Settings shared by every condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub alpha: f64,
    pub beta: f64,
    pub design: DesignKind,
    pub gs_ratios: Vec<f64>,
    pub gs_threshold: f64,
    pub adaptive: AdaptiveSpec,
    pub adaptive_threshold: f64,
    pub prior: PriorSet,
    pub fixed_draws: usize,
    pub sequential_draws: usize,
    pub screening: Option<Screening>,
    /// Added to the true difference before sizing, split across arms.
    pub anticipated_shift: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.20,
            design: DesignKind::Fixed,
            gs_ratios: equal_ratios(3),
            gs_threshold: GROUP_SEQUENTIAL_THRESHOLD,
            adaptive: AdaptiveSpec::default(),
            adaptive_threshold: ADAPTIVE_THRESHOLD,
            prior: PriorSet::Reference,
            fixed_draws: FIXED_DRAWS,
            sequential_draws: SEQUENTIAL_DRAWS,
            screening: Some(Screening::default()),
            anticipated_shift: 0.0,
        }
    }
}

/// Fixed-design sample size for `rule` at `dgm`: the a priori size when
/// the true difference favours superiority, [`NULL_SAMPLE_SIZE`] otherwise.
/// `None` when a shifted anticipated difference cannot be sized.
pub fn planned_sample_size(dgm: &DgmSpec, rule: GridRule, config: &HarnessConfig) -> Result<Option<u64>> {
    if !dgm.is_superior_under(&rule.decision_rule())? {
        return Ok(Some(NULL_SAMPLE_SIZE));
    }
    let anticipated = if config.anticipated_shift == 0.0 {
        dgm.clone()
    } else {
        match dgm.with_delta_shift(config.anticipated_shift) {
            Ok(d) => d,
            Err(_) => return Ok(None),
        }
    };
    let target = DesignTarget::from_dgm(&anticipated, config.alpha, config.beta)?;
    match sample_size(&rule.sizing_rule(), &target) {
        Ok(n) => Ok(Some(n)),
        Err(Error::ZeroEffect | Error::InfeasibleRule(_)) if config.anticipated_shift != 0.0 => Ok(None),
        Err(e) => Err(e),
    }
}

/// Design for one grid cell. `None` when the cell cannot be sized.
pub fn build_condition(dgm: &DgmSpec, rule: GridRule, config: &HarnessConfig) -> Result<Option<(Condition, DesignSpec)>> {
    let Some(n) = planned_sample_size(dgm, rule, config)? else { return Ok(None) };
    let decision = rule.decision_rule();
    let (prior_e, prior_c) = config.prior.priors(dgm)?;
    let (prior_e, prior_c) = (prior_from_spec(&prior_e)?, prior_from_spec(&prior_c)?);
    let (schedule, threshold, draws) = match config.design {
        DesignKind::Fixed => (vec![n], decision_threshold(&decision, config.alpha)?, config.fixed_draws),
        DesignKind::GroupSequential => (
            make_schedule(&ScheduleSpec::GroupSequential { n_fd: n, ratios: config.gs_ratios.clone() })?,
            config.gs_threshold,
            config.sequential_draws,
        ),
        DesignKind::Adaptive => {
            (make_schedule(&ScheduleSpec::Adaptive(config.adaptive))?, config.adaptive_threshold, config.sequential_draws)
        }
    };
    let mut spec = DesignSpec::new(config.design, schedule, threshold, decision, prior_e, prior_c, draws)?;
    spec.screening = config.screening.clone();
    let condition = Condition {
        dgm: dgm.id.clone(),
        rule: rule.label().to_string(),
        design: config.design,
        prior: config.prior.index(),
        n,
    };
    Ok(Some((condition, spec)))
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Runs `reps` replications of `spec` with data drawn from `dgm`.
///
/// Replication `r` uses stream `r` of a generator keyed by `seed` and the
/// condition, so results do not depend on the number of worker threads.
pub fn simulate_condition(
    dgm: &DgmSpec,
    condition: Condition,
    spec: &DesignSpec,
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    spec.validate()?;
    let keyed = seed ^ fnv1a(&condition.key());
    let results = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(keyed, rep);
            let data_rng = ChaCha8Rng::seed_from_u64(rng.random());
            let mut source = SimulatedSource::new(dgm.phi_e.clone(), dgm.phi_c.clone(), data_rng);
            run_sequential_trial(spec, &mut source, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let truth = dgm.delta();
    let k = truth.len();
    let mut superior = 0usize;
    let mut n_sum = 0u64;
    let mut bias = vec![0.0; k];
    let mut observed_bias = vec![0.0; k];
    for r in &results {
        if r.decision.superior {
            superior += 1;
            n_sum += r.n_at_stop;
        }
        for i in 0..k {
            bias[i] += r.posterior_mean_delta[i] - truth[i];
            observed_bias[i] += r.observed_delta[i] - truth[i];
        }
    }
    let reps_f = reps as f64;
    let rate = superior as f64 / reps_f;
    Ok(SimulationReport {
        condition,
        reps,
        rate,
        mean_n: (superior > 0).then(|| n_sum as f64 / superior as f64),
        bias: bias.into_iter().map(|b| b / reps_f).collect(),
        observed_bias: observed_bias.into_iter().map(|b| b / reps_f).collect(),
        se: (rate * (1.0 - rate) / reps_f).sqrt(),
    })
}

/// Builds and runs one grid cell.
pub fn simulate_cell(dgm: &DgmSpec, rule: GridRule, config: &HarnessConfig, reps: usize, seed: u64) -> Result<Option<SimulationReport>> {
    match build_condition(dgm, rule, config)? {
        Some((condition, spec)) => simulate_condition(dgm, condition, &spec, reps, seed).map(Some),
        None => Ok(None),
    }
}

/// Every mechanism crossed with every rule.
pub fn simulate_grid(config: &HarnessConfig, reps: usize, seed: u64) -> Result<Vec<SimulationReport>> {
    let mut reports = Vec::new();
    for dgm in dgm_table() {
        for rule in GridRule::ALL {
            if let Some(report) = simulate_cell(&dgm, rule, config, reps, seed)? {
                reports.push(report);
            }
        }
    }
    Ok(reports)
}

/// Planned per-arm sample sizes, `None` where a mechanism should not yield
/// superiority.
pub fn sample_size_grid(config: &HarnessConfig) -> Result<Vec<(String, GridRule, Option<u64>)>> {
    let mut rows = Vec::new();
    for dgm in dgm_table() {
        for rule in GridRule::ALL {
            let n = if dgm.is_superior_under(&rule.decision_rule())? { planned_sample_size(&dgm, rule, config)? } else { None };
            rows.push((dgm.id.clone(), rule, n));
        }
    }
    Ok(rows)
}

/// Rounded table: probabilities to three decimals, bias to two, sample
/// sizes to integers.
pub fn write_csv<W: Write>(reports: &[SimulationReport], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let k = reports.first().map_or(2, |r| r.bias.len());
    let mut header = vec!["dgm".to_string(), "rule".into(), "design".into(), "prior".into(), "n".into(), "reps".into()];
    header.extend(["rate", "se", "mean_n"].map(String::from));
    header.extend((1..=k).map(|i| format!("bias_{i}")));
    w.write_record(&header).map_err(io)?;
    for r in reports {
        let c = &r.condition;
        let design = match c.design {
            DesignKind::Fixed => "fixed",
            DesignKind::GroupSequential => "gs",
            DesignKind::Adaptive => "adaptive",
        };
        let mut row = vec![c.dgm.clone(), c.rule.clone(), design.into(), c.prior.to_string(), c.n.to_string(), r.reps.to_string()];
        row.push(format!("{:.3}", r.rate));
        row.push(format!("{:.3}", r.se));
        row.push(r.mean_n.map_or_else(|| "-".into(), |m| format!("{m:.0}")));
        row.extend(r.bias.iter().map(|b| format!("{:.2}", b + 0.0)));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Full-precision JSON array of reports.
pub fn write_json<W: Write>(reports: &[SimulationReport], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, reports).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Marginal success probabilities implied by each arm's prior mean.
pub fn prior_margins(prior: &PriorSpec) -> Vec<f64> {
    margins_of(&prior.phi0).as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgm::dgm_by_id;

    #[test]
    fn rule_labels_round_trip() {
        for r in GridRule::ALL {
            assert_eq!(GridRule::parse(r.label()), Some(r));
        }
        assert_eq!(GridRule::parse("c-e"), Some(GridRule::CE));
    }

    #[test]
    fn planned_sizes() {
        let cfg = HarnessConfig::default();
        let n = |id: &str, r| planned_sample_size(&dgm_by_id(id).unwrap(), r, &cfg).unwrap();
        assert_eq!(n("4.2", GridRule::CE), Some(38));
        assert_eq!(n("7.2", GridRule::CUU), Some(733));
        assert_eq!(n("7.2", GridRule::CE), Some(NULL_SAMPLE_SIZE));
        assert_eq!(n("6.3", GridRule::All), Some(NULL_SAMPLE_SIZE));
        assert_eq!(n("8.1", GridRule::CUC), Some(36));
    }

    #[test]
    fn table_priors() {
        let d = dgm_by_id("4.2").unwrap();
        let (e, c) = PriorSet::Opposite.priors(&d).unwrap();
        assert_eq!(e.phi0, d.phi_c);
        assert_eq!(c.phi0, d.phi_e);
        let (e, c) = PriorSet::Smaller.priors(&d).unwrap();
        assert!((prior_margins(&e)[0] - 0.55).abs() < 1e-12 && (prior_margins(&c)[1] - 0.45).abs() < 1e-12);
        let (e, _) = PriorSet::Reference.priors(&d).unwrap();
        assert!((e.n0 - 0.04).abs() < 1e-15);
        assert_eq!(PriorSet::from_index(6), Some(PriorSet::Opposite));
        assert_eq!(PriorSet::from_index(0), None);
    }

    #[test]
    fn reports_are_reproducible_and_rounded() {
        let d = dgm_by_id("5.2").unwrap();
        let cfg = HarnessConfig { fixed_draws: 2_000, ..HarnessConfig::default() };
        let a = simulate_cell(&d, GridRule::CE, &cfg, 60, 7).unwrap().unwrap();
        let b = simulate_cell(&d, GridRule::CE, &cfg, 60, 7).unwrap().unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.rate));
        let mut csv = Vec::new();
        write_csv(std::slice::from_ref(&a), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("dgm,rule,design,prior,n,reps,rate,se,mean_n,bias_1,bias_2\n5.2,C-E,fixed,1,9,60,"));
        let mut json = Vec::new();
        write_json(&[a], &mut json).unwrap();
        assert!(String::from_utf8(json).unwrap().contains("\"observed_bias\""));
    }
}
