//! Multivariate Bernoulli data model with a conjugate Dirichlet prior.
//!
//! A joint response on `K` binary outcomes is one of `Q = 2^K` patterns.
//! Every vector indexed by pattern (cell probabilities, counts, Dirichlet
//! parameters, draw rows) shares one fixed order: descending binary with
//! outcome 1 as the most significant bit. For `K = 2` that is
//! `11, 10, 01, 00`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum constraint of a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Tolerance used to keep implied joint probabilities away from the
/// boundary of the feasible interval.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

/// Largest supported outcome count.
pub const MAX_OUTCOMES: usize = 16;

/// Number of joint-response patterns for `outcomes` binary outcomes.
pub fn cell_count(outcomes: usize) -> usize {
    1 << outcomes
}

fn outcomes_for_cells(cells: usize) -> Result<usize> {
    if cells < 2 || !cells.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "pattern vector length {cells} is not 2^K with K >= 1"
        )));
    }
    let k = cells.trailing_zeros() as usize;
    if k > MAX_OUTCOMES {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_OUTCOMES} outcomes are supported"
        )));
    }
    Ok(k)
}

/// Whether pattern `cell` records a success on `outcome` (zero based).
#[inline]
pub fn has_success(cell: usize, outcome: usize, outcomes: usize) -> bool {
    let value = cell_count(outcomes) - 1 - cell;
    (value >> (outcomes - 1 - outcome)) & 1 == 1
}

/// Cell index of a response vector.
pub fn cell_index(bits: &[bool]) -> usize {
    let k = bits.len();
    let value = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    cell_count(k) - 1 - value
}

/// Parses a pattern label such as `"10"` into `(cell, K)`.
pub fn parse_pattern(label: &str) -> Result<(usize, usize)> {
    let bits = label
        .chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            other => Err(Error::InvalidArgument(format!(
                "pattern {label:?} contains {other:?}; expected only 0 and 1"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    if bits.is_empty() || bits.len() > MAX_OUTCOMES {
        return Err(Error::InvalidArgument(format!(
            "pattern {label:?} must have between 1 and {MAX_OUTCOMES} bits"
        )));
    }
    Ok((cell_index(&bits), bits.len()))
}

/// Label of pattern `cell`, e.g. `"01"`.
pub fn pattern_label(cell: usize, outcomes: usize) -> String {
    (0..outcomes)
        .map(|k| if has_success(cell, k, outcomes) { '1' } else { '0' })
        .collect()
}

/// Probabilities of the `Q` joint response patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CellProbabilities {
    probs: Vec<f64>,
    outcomes: usize,
}

impl CellProbabilities {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let outcomes = outcomes_for_cells(probs.len())?;
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProbabilities(format!("entry {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidProbabilities(format!("entries sum to {total}")));
        }
        Ok(Self { probs, outcomes })
    }

    /// Equal probability on every pattern.
    pub fn uniform(outcomes: usize) -> Result<Self> {
        let q = cell_count(outcomes);
        Self::new(vec![1.0 / q as f64; q])
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn cells(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Probability that outcomes `k` and `l` both succeed.
    pub fn joint_success(&self, k: usize, l: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(q, _)| has_success(*q, k, self.outcomes) && has_success(*q, l, self.outcomes))
            .map(|(_, p)| p)
            .sum()
    }
}

impl TryFrom<Vec<f64>> for CellProbabilities {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CellProbabilities> for Vec<f64> {
    fn from(c: CellProbabilities) -> Self {
        c.probs
    }
}

/// Per-outcome success probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MarginalProbabilities(Vec<f64>);

impl MarginalProbabilities {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidProbabilities("no outcomes".into()));
        }
        if let Some(t) = theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidProbabilities(format!("margin {t} outside [0, 1]")));
        }
        Ok(Self(theta))
    }

    pub fn outcomes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for MarginalProbabilities {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MarginalProbabilities> for Vec<f64> {
    fn from(m: MarginalProbabilities) -> Self {
        m.0
    }
}

/// Observed frequencies of the joint response patterns in one arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct JointCounts {
    counts: Vec<u64>,
    outcomes: usize,
}

impl JointCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let outcomes = outcomes_for_cells(counts.len())?;
        Ok(Self { counts, outcomes })
    }

    pub fn zeros(outcomes: usize) -> Self {
        Self { counts: vec![0; cell_count(outcomes)], outcomes }
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, cell: usize) {
        self.counts[cell] += 1;
    }

    /// Elementwise sum.
    pub fn merged(&self, other: &JointCounts) -> Result<JointCounts> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                found: other.counts.len(),
            });
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(JointCounts { counts, outcomes: self.outcomes })
    }

    /// Observed success proportion per outcome; `None` when empty.
    pub fn observed_margins(&self) -> Option<Vec<f64>> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        Some(
            (0..self.outcomes)
                .map(|k| {
                    let s: u64 = self
                        .counts
                        .iter()
                        .enumerate()
                        .filter(|(q, _)| has_success(*q, k, self.outcomes))
                        .map(|(_, c)| c)
                        .sum();
                    s as f64 / n as f64
                })
                .collect(),
        )
    }
}

impl TryFrom<Vec<u64>> for JointCounts {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<JointCounts> for Vec<u64> {
    fn from(c: JointCounts) -> Self {
        c.counts
    }
}

/// Dirichlet hyperparameters over the joint response patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams {
    alpha: Vec<f64>,
    outcomes: usize,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let outcomes = outcomes_for_cells(alpha.len())?;
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidParams(format!("hyperparameter {a} is not positive")));
        }
        Ok(Self { alpha, outcomes })
    }

    /// The same value on every cell.
    pub fn symmetric(outcomes: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; cell_count(outcomes)])
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Posterior (or prior) mean of the cell probabilities.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.total();
        self.alpha.iter().map(|a| a / total).collect()
    }

    /// Mean of the marginal success probabilities.
    pub fn mean_margins(&self) -> Vec<f64> {
        let mean = self.mean();
        (0..self.outcomes)
            .map(|k| {
                mean.iter()
                    .enumerate()
                    .filter(|(q, _)| has_success(*q, k, self.outcomes))
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.alpha
    }
}

/// Prior expressed as a prior sample size and prior mean cell probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub n0: f64,
    pub phi0: CellProbabilities,
}

impl PriorSpec {
    pub fn new(n0: f64, phi0: CellProbabilities) -> Result<Self> {
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(Error::InvalidParams(format!("prior sample size {n0} is not positive")));
        }
        Ok(Self { n0, phi0 })
    }

    /// Near-zero prior with 0.01 on every cell (`n0 = Q / 100`).
    pub fn reference(outcomes: usize) -> Self {
        let q = cell_count(outcomes) as f64;
        Self { n0: q * 0.01, phi0: CellProbabilities::uniform(outcomes).expect("uniform") }
    }

    /// Jeffreys prior, 0.5 on every cell.
    pub fn jeffreys(outcomes: usize) -> Self {
        let q = cell_count(outcomes) as f64;
        Self { n0: q * 0.5, phi0: CellProbabilities::uniform(outcomes).expect("uniform") }
    }
}

/// A matrix of `rows` draws on the `cols`-simplex, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl DrawMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).ok_or(Error::EmptyDraws)?;
        outcomes_for_cells(cols)?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }
}

/// Draws of the per-outcome treatment difference, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaDraws {
    data: Vec<f64>,
    outcomes: usize,
}

impl DeltaDraws {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let outcomes = rows.first().map(Vec::len).ok_or(Error::EmptyDraws)?;
        if outcomes == 0 {
            return Err(Error::InvalidArgument("delta rows must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * outcomes);
        for row in rows {
            if row.len() != outcomes {
                return Err(Error::DimensionMismatch { expected: outcomes, found: row.len() });
            }
            if let Some(d) = row.iter().find(|d| !(-1.0..=1.0).contains(*d)) {
                return Err(Error::InvalidArgument(format!("treatment difference {d} outside [-1, 1]")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, outcomes })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.outcomes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.outcomes..(i + 1) * self.outcomes]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.outcomes)
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.outcomes];
        for row in self.iter_rows() {
            for (s, d) in sum.iter_mut().zip(row) {
                *s += d;
            }
        }
        let n = self.len().max(1) as f64;
        sum.into_iter().map(|s| s / n).collect()
    }
}

/// Joint cell probabilities of two binary outcomes with margins `theta` and
/// correlation `rho`.
pub fn cell_probs_from_margins(theta: &MarginalProbabilities, rho: f64) -> Result<CellProbabilities> {
    let &[t1, t2] = theta.as_slice() else {
        return Err(Error::DimensionMismatch { expected: 2, found: theta.outcomes() });
    };
    let infeasible = || Error::InfeasibleCorrelation { theta1: t1, theta2: t2, rho };
    if !(t1 > 0.0 && t1 < 1.0 && t2 > 0.0 && t2 < 1.0) || !(-1.0..=1.0).contains(&rho) {
        return Err(infeasible());
    }
    let p11 = rho * (t1 * (1.0 - t1) * t2 * (1.0 - t2)).sqrt() + t1 * t2;
    let lower = (t1 + t2 - 1.0).max(0.0);
    let upper = t1.min(t2);
    if p11 <= lower + FEASIBILITY_TOLERANCE || p11 >= upper - FEASIBILITY_TOLERANCE {
        return Err(infeasible());
    }
    // Fixes rounding so the cells sum to one exactly where possible.
    let p10 = t1 - p11;
    let p01 = t2 - p11;
    let p00 = 1.0 - p11 - p10 - p01;
    CellProbabilities::new(vec![p11, p10, p01, p00])
}

/// Marginal success probability of every outcome.
pub fn margins_of(phi: &CellProbabilities) -> MarginalProbabilities {
    let k = phi.outcomes();
    let theta = (0..k)
        .map(|o| {
            phi.as_slice()
                .iter()
                .enumerate()
                .filter(|(q, _)| has_success(*q, o, k))
                .map(|(_, p)| p)
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect();
    MarginalProbabilities(theta)
}

/// Correlation between binary outcomes `k` and `l` under `phi`.
pub fn pairwise_correlation(phi: &CellProbabilities, k: usize, l: usize) -> Result<f64> {
    let outcomes = phi.outcomes();
    for index in [k, l] {
        if index >= outcomes {
            return Err(Error::OutcomeOutOfRange { index, outcomes });
        }
    }
    if k == l {
        return Err(Error::InvalidArgument("correlation needs two distinct outcomes".into()));
    }
    let theta = margins_of(phi);
    let (tk, tl) = (theta.as_slice()[k], theta.as_slice()[l]);
    for (index, t) in [(k, tk), (l, tl)] {
        if t <= 0.0 || t >= 1.0 {
            return Err(Error::DegenerateMargin(index));
        }
    }
    let tkl = phi.joint_success(k, l);
    let r = (tkl - tk * tl) / (tk * (1.0 - tk) * tl * (1.0 - tl)).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

/// Conjugate update: posterior parameters are prior plus counts.
pub fn posterior_update(prior: &DirichletParams, counts: &JointCounts) -> Result<DirichletParams> {
    if prior.alpha.len() != counts.counts.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.alpha.len(),
            found: counts.counts.len(),
        });
    }
    let alpha = prior.alpha.iter().zip(&counts.counts).map(|(a, &s)| a + s as f64).collect();
    Ok(DirichletParams { alpha, outcomes: prior.outcomes })
}

/// Dirichlet hyperparameters `n0 * phi0`.
pub fn prior_from_spec(spec: &PriorSpec) -> Result<DirichletParams> {
    DirichletParams::new(spec.phi0.as_slice().iter().map(|p| spec.n0 * p).collect())
}

enum CellSampler {
    /// Shape >= 1: direct Marsaglia-Tsang draw.
    Direct(Gamma<f64>),
    /// Shape < 1: `G(a) = G(a + 1) * U^(1/a)`, evaluated on the log scale.
    Boosted { gamma: Gamma<f64>, inv_shape: f64 },
}

/// Draws `draws` rows from `Dirichlet(params)` via normalized Gamma variates.
///
/// Shapes below one are handled on the log scale so that tiny
/// hyperparameters (0.01 and smaller) never produce an all-zero row.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    params: &DirichletParams,
    draws: usize,
    rng: &mut R,
) -> Result<DrawMatrix> {
    if draws == 0 {
        return Err(Error::InvalidArgument("at least one draw is required".into()));
    }
    let q = params.alpha.len();
    let samplers = params
        .alpha
        .iter()
        .map(|&a| {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParams(format!("hyperparameter {a} is not positive")));
            }
            Ok(if a >= 1.0 {
                CellSampler::Direct(Gamma::new(a, 1.0).map_err(|e| Error::InvalidParams(e.to_string()))?)
            } else {
                CellSampler::Boosted {
                    gamma: Gamma::new(a + 1.0, 1.0).map_err(|e| Error::InvalidParams(e.to_string()))?,
                    inv_shape: 1.0 / a,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let any_small = samplers.iter().any(|s| matches!(s, CellSampler::Boosted { .. }));

    let mut data = vec![0.0; draws * q];
    for row in data.chunks_exact_mut(q) {
        if any_small {
            for (x, sampler) in row.iter_mut().zip(&samplers) {
                *x = match sampler {
                    CellSampler::Direct(g) => g.sample(rng).ln(),
                    CellSampler::Boosted { gamma, inv_shape } => {
                        let u: f64 = Open01.sample(rng);
                        gamma.sample(rng).ln() + u.ln() * inv_shape
                    }
                };
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            let mut total = 0.0;
            for (x, sampler) in row.iter_mut().zip(&samplers) {
                if let CellSampler::Direct(g) = sampler {
                    *x = g.sample(rng);
                }
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(DrawMatrix { data, cols: q })
}

/// Multinomial counts of `n` subjects over the patterns of `phi`, drawn as
/// a chain of conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(phi: &CellProbabilities, n: u64, rng: &mut R) -> JointCounts {
    let mut counts = vec![0u64; phi.cells()];
    let mut remaining = n;
    let mut mass = 1.0;
    let last = phi.cells() - 1;
    for (q, &p) in phi.as_slice().iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if q == last {
            counts[q] = remaining;
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = if cond >= 1.0 {
            remaining
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(remaining, cond).expect("valid binomial").sample(rng)
        };
        counts[q] = draw;
        remaining -= draw;
        mass -= p;
    }
    JointCounts { counts, outcomes: phi.outcomes() }
}

/// Per-draw treatment differences `theta_E - theta_C`, pairing rows by index.
pub fn delta_draws(experimental: &DrawMatrix, control: &DrawMatrix) -> Result<DeltaDraws> {
    if experimental.cols != control.cols {
        return Err(Error::DimensionMismatch { expected: experimental.cols, found: control.cols });
    }
    if experimental.rows() != control.rows() {
        return Err(Error::DimensionMismatch { expected: experimental.rows(), found: control.rows() });
    }
    let outcomes = outcomes_for_cells(experimental.cols)?;
    let success_cells: Vec<Vec<usize>> = (0..outcomes)
        .map(|k| (0..experimental.cols).filter(|&q| has_success(q, k, outcomes)).collect())
        .collect();
    let mut data = Vec::with_capacity(experimental.rows() * outcomes);
    for (e, c) in experimental.iter_rows().zip(control.iter_rows()) {
        for cells in &success_cells {
            let te: f64 = cells.iter().map(|&q| e[q]).sum();
            let tc: f64 = cells.iter().map(|&q| c[q]).sum();
            data.push(te - tc);
        }
    }
    Ok(DeltaDraws { data, outcomes })
}
