//! Fixed, group-sequential and adaptive trials, plus threshold calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    delta_draws, posterior_update, sample_dirichlet, sample_multinomial, CellProbabilities, DirichletParams,
    JointCounts,
};
use crate::rules::{decide, superiority_probability, Decision, DecisionRule};

/// Default posterior draws per interim analysis.
pub const SEQUENTIAL_DRAWS: usize = 10_000;
/// Default posterior draws for a single final analysis.
pub const FIXED_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Fixed,
    GroupSequential,
    Adaptive,
}

/// Staged pilot samples that settle a look early when the estimate is
/// already far from the threshold.
///
/// Each stage with fewer draws than the design runs in turn. A stage
/// settles the look when its estimate lies more than `sd_margin`
/// worst-case binomial standard errors (plus one draw) from the threshold;
/// that estimate is then reported. Otherwise the full sample decides.
/// Decisions agree with the unscreened design except with probability of
/// order `Phi(-sd_margin)` per look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub stages: Vec<usize>,
    pub sd_margin: f64,
}

impl Default for Screening {
    fn default() -> Self {
        Self { stages: vec![1_000, 10_000], sd_margin: 4.0 }
    }
}

/// Where a stage estimate sits relative to a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settled {
    Below,
    Above,
    Open,
}

impl Screening {
    pub const MAX_STAGES: usize = 15;

    fn margin(&self, draws: usize, threshold: f64) -> f64 {
        let spread = if threshold > 0.5 { threshold * (1.0 - threshold) } else { 0.25 };
        let n = draws as f64;
        self.sd_margin * (spread / n).sqrt() + 1.0 / n
    }

    /// Classifies estimate `p` from `draws` draws against `threshold`.
    pub fn classify(&self, p: f64, draws: usize, threshold: f64) -> Settled {
        let m = self.margin(draws, threshold);
        if p < threshold - m {
            Settled::Below
        } else if p > threshold + m {
            Settled::Above
        } else {
            Settled::Open
        }
    }
}

/// Everything needed to run a trial except the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub schedule: Vec<u64>,
    pub threshold: f64,
    pub rule: DecisionRule,
    pub prior_e: DirichletParams,
    pub prior_c: DirichletParams,
    pub draws: usize,
    pub screening: Option<Screening>,
}

impl DesignSpec {
    pub fn new(
        kind: DesignKind,
        schedule: Vec<u64>,
        threshold: f64,
        rule: DecisionRule,
        prior_e: DirichletParams,
        prior_c: DirichletParams,
        draws: usize,
    ) -> Result<Self> {
        let spec = Self { kind, schedule, threshold, rule, prior_e, prior_c, draws, screening: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Single analysis at `n` per arm with [`FIXED_DRAWS`] draws.
    pub fn fixed(n: u64, threshold: f64, rule: DecisionRule, prior_e: DirichletParams, prior_c: DirichletParams) -> Result<Self> {
        Self::new(DesignKind::Fixed, vec![n], threshold, rule, prior_e, prior_c, FIXED_DRAWS)
    }

    pub fn with_screening(mut self, screening: Screening) -> Self {
        self.screening = Some(screening);
        self
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn outcomes(&self) -> usize {
        self.prior_e.outcomes()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDesign(m.into()));
        if self.schedule.is_empty() {
            return bad("schedule is empty");
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("schedule must be strictly increasing");
        }
        if self.schedule[0] == 0 {
            return bad("analyses need at least one subject per arm");
        }
        if self.kind == DesignKind::Fixed && self.schedule.len() != 1 {
            return bad("a fixed design has exactly one analysis");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.draws == 0 {
            return bad("at least one posterior draw is required");
        }
        if self.prior_e.as_slice().len() != self.prior_c.as_slice().len() {
            return Err(Error::DimensionMismatch {
                expected: self.prior_e.as_slice().len(),
                found: self.prior_c.as_slice().len(),
            });
        }
        if let Some(s) = &self.screening {
            if s.stages.is_empty() || s.stages.len() > Screening::MAX_STAGES || s.stages.contains(&0) {
                return bad("screening needs between 1 and 15 non-empty stages");
            }
            if !(s.sd_margin >= 0.0) {
                return bad("screening margin must be nonnegative");
            }
        }
        self.rule.validate(self.outcomes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub decision: Decision,
    pub n_at_stop: u64,
    pub analyses_performed: usize,
    /// Posterior mean of the treatment differences at the stopping analysis.
    pub posterior_mean_delta: Vec<f64>,
    /// Raw difference in observed success proportions at the stopping analysis.
    pub observed_delta: Vec<f64>,
    /// Posterior probability at each analysis performed.
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Experimental,
    Control,
}

impl Arm {
    pub fn tag(self) -> char {
        match self {
            Arm::Experimental => 'E',
            Arm::Control => 'C',
        }
    }
}

/// Supplies joint responses to a sequential trial in enrolment order.
pub trait ResponseSource {
    /// Pattern counts of the next `n` subjects of `arm`.
    fn next_counts(&mut self, arm: Arm, n: u64) -> Result<JointCounts>;
}

/// Responses drawn from fixed cell probabilities.
pub struct SimulatedSource<R> {
    phi_e: CellProbabilities,
    phi_c: CellProbabilities,
    rng: R,
}

impl<R: Rng> SimulatedSource<R> {
    pub fn new(phi_e: CellProbabilities, phi_c: CellProbabilities, rng: R) -> Self {
        Self { phi_e, phi_c, rng }
    }
}

impl<R: Rng> ResponseSource for SimulatedSource<R> {
    fn next_counts(&mut self, arm: Arm, n: u64) -> Result<JointCounts> {
        let phi = match arm {
            Arm::Experimental => &self.phi_e,
            Arm::Control => &self.phi_c,
        };
        Ok(sample_multinomial(phi, n, &mut self.rng))
    }
}

/// Replays recorded subjects, given as cell indices per arm.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    outcomes: usize,
    experimental: Vec<usize>,
    control: Vec<usize>,
    pos_e: usize,
    pos_c: usize,
}

impl ReplaySource {
    pub fn new(outcomes: usize, experimental: Vec<usize>, control: Vec<usize>) -> Result<Self> {
        let q = crate::model::cell_count(outcomes);
        if let Some(c) = experimental.iter().chain(&control).find(|c| **c >= q) {
            return Err(Error::InvalidArgument(format!("cell {c} out of range for {outcomes} outcomes")));
        }
        Ok(Self { outcomes, experimental, control, pos_e: 0, pos_c: 0 })
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }
}

impl ResponseSource for ReplaySource {
    fn next_counts(&mut self, arm: Arm, n: u64) -> Result<JointCounts> {
        let (cells, pos) = match arm {
            Arm::Experimental => (&self.experimental, &mut self.pos_e),
            Arm::Control => (&self.control, &mut self.pos_c),
        };
        let end = *pos + n as usize;
        if end > cells.len() {
            return Err(Error::StreamExhausted { arm: arm.tag(), available: cells.len() as u64 });
        }
        let mut counts = JointCounts::zeros(self.outcomes);
        for &c in &cells[*pos..end] {
            counts.record(c);
        }
        *pos = end;
        Ok(counts)
    }
}

struct Analysis {
    probability: f64,
    screened: bool,
    posterior_mean: Vec<f64>,
    observed: Vec<f64>,
}

fn analysis_rng(base: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng
}

fn posterior_probability(
    rule: &DecisionRule,
    post_e: &DirichletParams,
    post_c: &DirichletParams,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let d_e = sample_dirichlet(post_e, draws, rng)?;
    let d_c = sample_dirichlet(post_c, draws, rng)?;
    superiority_probability(rule, &delta_draws(&d_e, &d_c)?)
}

/// One analysis. Every stage and the full sample use their own stream so
/// the full estimate does not depend on whether screening ran. With
/// `settle_above` false only estimates clearly below `screen_against`
/// are accepted early.
fn analyse(
    spec: &DesignSpec,
    counts_e: &JointCounts,
    counts_c: &JointCounts,
    base: u64,
    look: usize,
    screen_against: f64,
    settle_above: bool,
) -> Result<Analysis> {
    let post_e = posterior_update(&spec.prior_e, counts_e)?;
    let post_c = posterior_update(&spec.prior_c, counts_c)?;
    let mean_e = post_e.mean_margins();
    let mean_c = post_c.mean_margins();
    let posterior_mean = mean_e.iter().zip(&mean_c).map(|(e, c)| e - c).collect();
    let observed = match (counts_e.observed_margins(), counts_c.observed_margins()) {
        (Some(e), Some(c)) => e.iter().zip(&c).map(|(e, c)| e - c).collect(),
        _ => vec![0.0; spec.outcomes()],
    };
    let stream = (Screening::MAX_STAGES as u64 + 1) * look as u64;
    if let Some(screen) = &spec.screening {
        for (i, &draws) in screen.stages.iter().enumerate().filter(|(_, d)| **d < spec.draws) {
            let mut rng = analysis_rng(base, stream + i as u64);
            let p = posterior_probability(&spec.rule, &post_e, &post_c, draws, &mut rng)?;
            match screen.classify(p, draws, screen_against) {
                Settled::Below => return Ok(Analysis { probability: p, screened: true, posterior_mean, observed }),
                Settled::Above if settle_above => {
                    return Ok(Analysis { probability: p, screened: true, posterior_mean, observed })
                }
                _ => {}
            }
        }
    }
    let mut rng = analysis_rng(base, stream + Screening::MAX_STAGES as u64);
    let probability = posterior_probability(&spec.rule, &post_e, &post_c, spec.draws, &mut rng)?;
    Ok(Analysis { probability, screened: false, posterior_mean, observed })
}

fn result_from(spec: &DesignSpec, last: Analysis, n: u64, trajectory: Vec<f64>) -> TrialResult {
    TrialResult {
        decision: decide(last.probability, spec.threshold),
        n_at_stop: n,
        analyses_performed: trajectory.len(),
        posterior_mean_delta: last.posterior_mean,
        observed_delta: last.observed,
        trajectory,
    }
}

/// Single analysis of complete data from both arms.
pub fn run_fixed_trial<R: Rng + ?Sized>(
    spec: &DesignSpec,
    data_e: &JointCounts,
    data_c: &JointCounts,
    rng: &mut R,
) -> Result<TrialResult> {
    spec.validate()?;
    let n = *spec.schedule.last().expect("validated");
    for data in [data_e, data_c] {
        if data.as_slice().len() != spec.prior_e.as_slice().len() {
            return Err(Error::DimensionMismatch { expected: spec.prior_e.as_slice().len(), found: data.as_slice().len() });
        }
        if data.total() != n {
            return Err(Error::CountMismatch { expected: n, found: data.total() });
        }
    }
    let base: u64 = rng.random();
    let analysis = analyse(spec, data_e, data_c, base, 0, spec.threshold, true)?;
    let p = analysis.probability;
    Ok(result_from(spec, analysis, n, vec![p]))
}

/// Analyses accumulating data at every scheduled sample size, stopping at
/// the first probability above the threshold.
pub fn run_sequential_trial<S: ResponseSource + ?Sized, R: Rng + ?Sized>(
    spec: &DesignSpec,
    source: &mut S,
    rng: &mut R,
) -> Result<TrialResult> {
    spec.validate()?;
    let base: u64 = rng.random();
    let mut counts_e = JointCounts::zeros(spec.outcomes());
    let mut counts_c = JointCounts::zeros(spec.outcomes());
    let mut trajectory = Vec::with_capacity(spec.schedule.len());
    let mut enrolled = 0;
    for (look, &n) in spec.schedule.iter().enumerate() {
        counts_e = counts_e.merged(&source.next_counts(Arm::Experimental, n - enrolled)?)?;
        counts_c = counts_c.merged(&source.next_counts(Arm::Control, n - enrolled)?)?;
        enrolled = n;
        let analysis = analyse(spec, &counts_e, &counts_c, base, look, spec.threshold, true)?;
        trajectory.push(analysis.probability);
        if analysis.probability > spec.threshold || look + 1 == spec.schedule.len() {
            return Ok(result_from(spec, analysis, n, trajectory));
        }
    }
    unreachable!("schedule is non-empty")
}

/// Dense monitoring schedule: every `fine_step` from `start` to `switch`,
/// then every `coarse_step` up to `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptiveSpec {
    pub start: u64,
    pub switch: u64,
    pub fine_step: u64,
    pub coarse_step: u64,
    pub cap: u64,
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        Self { start: 5, switch: 50, fine_step: 1, coarse_step: 5, cap: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Fixed { n: u64 },
    GroupSequential { n_fd: u64, ratios: Vec<f64> },
    Adaptive(AdaptiveSpec),
}

impl ScheduleSpec {
    pub fn kind(&self) -> DesignKind {
        match self {
            ScheduleSpec::Fixed { .. } => DesignKind::Fixed,
            ScheduleSpec::GroupSequential { .. } => DesignKind::GroupSequential,
            ScheduleSpec::Adaptive(_) => DesignKind::Adaptive,
        }
    }
}

/// `count` equally spaced fractions ending at one.
pub fn equal_ratios(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / count as f64).collect()
}

/// Per-arm sample sizes at each analysis.
///
/// Group-sequential looks are `n_fd * ratio` rounded half up, clamped to at
/// least two and deduplicated.
pub fn make_schedule(spec: &ScheduleSpec) -> Result<Vec<u64>> {
    match spec {
        ScheduleSpec::Fixed { n } if *n == 0 => Err(Error::InvalidDesign("sample size must be positive".into())),
        ScheduleSpec::Fixed { n } => Ok(vec![*n]),
        ScheduleSpec::GroupSequential { n_fd, ratios } => {
            let bad = |m: &str| Err(Error::InvalidRatios(m.into()));
            if ratios.is_empty() {
                return bad("no interim ratios");
            }
            if ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                return bad("ratios must lie in (0, 1]");
            }
            if ratios.windows(2).any(|w| w[0] >= w[1]) {
                return bad("ratios must be strictly increasing");
            }
            if (ratios[ratios.len() - 1] - 1.0).abs() > 1e-12 {
                return bad("the last ratio must be 1");
            }
            let mut schedule: Vec<u64> = ratios
                .iter()
                .map(|r| ((*n_fd as f64 * r + 0.5 + 1e-9).floor() as u64).max(2))
                .collect();
            schedule.dedup();
            Ok(schedule)
        }
        ScheduleSpec::Adaptive(a) => {
            if a.start == 0 || a.fine_step == 0 || a.coarse_step == 0 || a.start > a.cap {
                return Err(Error::InvalidDesign("adaptive schedule parameters are inconsistent".into()));
            }
            let mut schedule = Vec::new();
            let mut n = a.start;
            while n <= a.cap {
                schedule.push(n);
                n += if n < a.switch { a.fine_step } else { a.coarse_step };
            }
            Ok(schedule)
        }
    }
}

/// Calibrated threshold together with the statistics behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub alpha: f64,
    pub reps: usize,
    /// Largest posterior probability reached by each replication.
    pub maxima: Vec<f64>,
}

/// Per-replication generator for replication `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn trial_maximum(spec: &DesignSpec, phi_e: &CellProbabilities, phi_c: &CellProbabilities, floor: f64, seed: u64, rep: u64) -> Result<f64> {
    let mut rng = replication_rng(seed, rep);
    let mut source = SimulatedSource::new(phi_e.clone(), phi_c.clone(), ChaCha8Rng::seed_from_u64(rng.random()));
    let base: u64 = rng.random();
    let mut counts_e = JointCounts::zeros(spec.outcomes());
    let mut counts_c = JointCounts::zeros(spec.outcomes());
    let mut enrolled = 0;
    let mut best = 0.0f64;
    let mut best_exact = f64::NEG_INFINITY;
    for (look, &n) in spec.schedule.iter().enumerate() {
        counts_e = counts_e.merged(&source.next_counts(Arm::Experimental, n - enrolled)?)?;
        counts_c = counts_c.merged(&source.next_counts(Arm::Control, n - enrolled)?)?;
        enrolled = n;
        let against = floor.max(best_exact);
        let a = analyse(spec, &counts_e, &counts_c, base, look, against, false)?;
        if !a.screened {
            best_exact = best_exact.max(a.probability);
        }
        best = best.max(a.probability);
    }
    Ok(best)
}

/// Threshold whose empirical Type I error under `phi_e`, `phi_c` equals
/// `alpha`: the `1 - alpha` quantile of each replication's largest
/// posterior probability across all analyses, without early stopping.
///
/// With screening enabled, looks are screened against `1 - alpha`; if the
/// resulting quantile does not clear that floor the run is repeated
/// without screening.
pub fn calibrate_threshold(
    spec: &DesignSpec,
    phi_e: &CellProbabilities,
    phi_c: &CellProbabilities,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<Calibration> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("calibration needs at least one replication".into()));
    }
    spec.validate()?;
    let floor = 1.0 - alpha;
    let run = |spec: &DesignSpec| -> Result<Vec<f64>> {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| trial_maximum(spec, phi_e, phi_c, floor, seed, rep))
            .collect()
    };
    let index = ((reps as f64 * (1.0 - alpha)).ceil() as usize).clamp(1, reps) - 1;
    let quantile = |maxima: &[f64]| {
        let mut sorted = maxima.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted[index]
    };
    let mut maxima = run(spec)?;
    let mut threshold = quantile(&maxima);
    if spec.screening.is_some() && threshold <= floor {
        let mut exact = spec.clone();
        exact.screening = None;
        maxima = run(&exact)?;
        threshold = quantile(&maxima);
    }
    Ok(Calibration { threshold, alpha, reps, maxima })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriorSpec;

    fn reference() -> DirichletParams {
        crate::model::prior_from_spec(&PriorSpec::reference(2)).unwrap()
    }

    fn spec(kind: DesignKind, schedule: Vec<u64>, threshold: f64) -> DesignSpec {
        DesignSpec::new(kind, schedule, threshold, DecisionRule::equal_weights(2), reference(), reference(), 4_000).unwrap()
    }

    #[test]
    fn schedules() {
        let gs = ScheduleSpec::GroupSequential { n_fd: 38, ratios: equal_ratios(3) };
        assert_eq!(make_schedule(&gs).unwrap(), vec![13, 25, 38]);
        let ad = make_schedule(&ScheduleSpec::Adaptive(AdaptiveSpec::default())).unwrap();
        assert_eq!((ad.len(), ad[0], ad[ad.len() - 1]), (136, 5, 500));
        assert_eq!(&ad[44..48], &[49, 50, 55, 60]);
        let tiny = ScheduleSpec::GroupSequential { n_fd: 1, ratios: equal_ratios(3) };
        assert_eq!(make_schedule(&tiny).unwrap(), vec![2]);
        let bad = ScheduleSpec::GroupSequential { n_fd: 38, ratios: vec![0.5, 0.9] };
        assert!(matches!(make_schedule(&bad), Err(Error::InvalidRatios(_))));
        let unsorted = ScheduleSpec::GroupSequential { n_fd: 38, ratios: vec![0.5, 0.3, 1.0] };
        assert!(make_schedule(&unsorted).is_err());
    }

    #[test]
    fn invalid_designs() {
        let r = reference();
        let rule = DecisionRule::Any;
        assert!(DesignSpec::new(DesignKind::Fixed, vec![10, 20], 0.95, rule.clone(), r.clone(), r.clone(), 10).is_err());
        assert!(DesignSpec::new(DesignKind::Adaptive, vec![20, 10], 0.95, rule.clone(), r.clone(), r.clone(), 10).is_err());
        assert!(DesignSpec::new(DesignKind::Fixed, vec![10], 1.0, rule, r.clone(), r, 10).is_err());
    }

    #[test]
    fn overwhelming_and_symmetric_data() {
        let s = spec(DesignKind::Fixed, vec![100], 0.95);
        let strong_e = JointCounts::new(vec![49, 21, 21, 9]).unwrap();
        let strong_c = JointCounts::new(vec![9, 21, 21, 49]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_fixed_trial(&s, &strong_e, &strong_c, &mut rng).unwrap();
        assert!(r.decision.superior && r.decision.posterior_probability > 0.999);
        let same = JointCounts::new(vec![25, 25, 25, 25]).unwrap();
        let r = run_fixed_trial(&s, &same, &same, &mut rng).unwrap();
        assert!(!r.decision.superior);
        assert!((r.decision.posterior_probability - 0.5).abs() < 0.05);
        assert!(r.posterior_mean_delta.iter().all(|d| d.abs() < 1e-12));
        let short = JointCounts::new(vec![1, 1, 1, 1]).unwrap();
        assert_eq!(run_fixed_trial(&s, &short, &same, &mut rng), Err(Error::CountMismatch { expected: 100, found: 4 }));
    }

    #[test]
    fn early_stop_and_full_run() {
        let strong = |n: u64| {
            let e: Vec<usize> = (0..n).map(|_| 0).collect();
            let c: Vec<usize> = (0..n).map(|_| 3).collect();
            ReplaySource::new(2, e, c).unwrap()
        };
        let s = spec(DesignKind::GroupSequential, vec![10, 20, 30], 0.98);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = run_sequential_trial(&s, &mut strong(30), &mut rng).unwrap();
        assert_eq!((r.analyses_performed, r.n_at_stop), (1, 10));
        let flat: Vec<usize> = (0..30).map(|i| i % 4).collect();
        let mut same = ReplaySource::new(2, flat.clone(), flat).unwrap();
        let r = run_sequential_trial(&s, &mut same, &mut rng).unwrap();
        assert_eq!((r.analyses_performed, r.n_at_stop), (3, 30));
        assert_eq!(r.decision.posterior_probability, *r.trajectory.last().unwrap());
    }

    #[test]
    fn replay_exhaustion() {
        let s = spec(DesignKind::GroupSequential, vec![2, 4], 0.999);
        let mut src = ReplaySource::new(2, vec![3, 3, 3], vec![3, 3, 3, 3]).unwrap();
        let err = run_sequential_trial(&s, &mut src, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, Error::StreamExhausted { arm: 'E', available: 3 });
    }

    #[test]
    fn screening_matches_exact_decisions() {
        let phi = CellProbabilities::new(vec![0.3, 0.25, 0.25, 0.2]).unwrap();
        let phi_c = CellProbabilities::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let plain = spec(DesignKind::Fixed, vec![60], 0.95);
        let screened = plain.clone().with_screening(Screening { stages: vec![200, 1_000], sd_margin: 4.0 });
        for rep in 0..40 {
            let run = |s: &DesignSpec| {
                let mut rng = replication_rng(11, rep);
                let mut src = SimulatedSource::new(phi.clone(), phi_c.clone(), ChaCha8Rng::seed_from_u64(rng.random()));
                run_sequential_trial(s, &mut src, &mut rng).unwrap()
            };
            assert_eq!(run(&plain).decision.superior, run(&screened).decision.superior);
        }
    }

    #[test]
    fn single_look_calibration_is_near_nominal() {
        let phi = CellProbabilities::uniform(2).unwrap();
        let s = spec(DesignKind::Fixed, vec![50], 0.5).with_draws(2_000);
        let c = calibrate_threshold(&s, &phi, &phi, 0.05, 1_000, 3).unwrap();
        assert!((c.threshold - 0.95).abs() < 0.02, "{}", c.threshold);
        assert_eq!(c.maxima.len(), 1_000);
    }
}
