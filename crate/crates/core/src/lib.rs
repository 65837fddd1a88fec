//! Bayesian superiority decisions for two-arm trials with several
//! correlated binary outcomes.
//!
//! Joint responses follow a multivariate Bernoulli distribution with a
//! conjugate Dirichlet prior per arm. Posterior draws of the treatment
//! differences are compared against a superiority region defined by a
//! [`DecisionRule`]: a single outcome, any outcome, all outcomes, or a
//! weighted (compensatory) combination.
//!
//! ```
//! use multibin::{decide, decision_threshold, delta_draws, posterior_update, prior_from_spec,
//!     sample_dirichlet, superiority_probability, DecisionRule, JointCounts, PriorSpec};
//! use rand::SeedableRng;
//!
//! let prior = prior_from_spec(&PriorSpec::reference(2))?;
//! let e = posterior_update(&prior, &JointCounts::new(vec![20, 10, 8, 2])?)?;
//! let c = posterior_update(&prior, &JointCounts::new(vec![8, 10, 12, 10])?)?;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let draws = delta_draws(&sample_dirichlet(&e, 20_000, &mut rng)?, &sample_dirichlet(&c, 20_000, &mut rng)?)?;
//! let rule = DecisionRule::equal_weights(2);
//! let p = superiority_probability(&rule, &draws)?;
//! assert!(decide(p, decision_threshold(&rule, 0.05)?).superior);
//! # Ok::<(), multibin::Error>(())
//! ```

pub mod design;
pub mod dgm;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod normal;
pub mod rules;
pub mod trial;
pub mod weights;

pub use design::{
    mvn_power, sample_size, sample_size_compensatory, sample_size_mvn, sample_size_mvn_with, sample_size_single,
    DesignTarget, VarianceConvention,
};
pub use dgm::{dgm_by_id, dgm_table, expected_counts, least_favorable_dgm, DgmSpec};
pub use error::{Error, Result};
pub use harness::{simulate_condition, Condition, HarnessConfig, GridRule, SimulationReport, PriorSet};
pub use model::{
    cell_probs_from_margins, delta_draws, margins_of, pairwise_correlation, posterior_update, prior_from_spec,
    sample_dirichlet, sample_multinomial, CellProbabilities, DeltaDraws, DirichletParams, DrawMatrix, JointCounts,
    MarginalProbabilities, PriorSpec,
};
pub use normal::{bvn_cdf, mvn_cdf, normal_cdf, normal_quantile};
pub use rules::{
    decide, decision_threshold, region_probability, superiority_indicator, superiority_probability, Decision,
    DecisionRule,
};
pub use trial::{
    calibrate_threshold, make_schedule, run_fixed_trial, run_sequential_trial, AdaptiveSpec, Calibration, DesignKind,
    DesignSpec, ReplaySource, ResponseSource, ScheduleSpec, Screening, SimulatedSource, TrialResult,
};
pub use weights::{compensatory_evidence, estimate_moments, optimize_weights, posterior_moments, DeltaMoments};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/sample-size.md")]
    mod sample_size {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/designs.md")]
    mod designs {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
