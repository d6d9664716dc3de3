//! Interval counterfactual MDPs.
//!
//! Given a finite MDP and one observed path, [`bounds::build_interval_cfmdp`]
//! computes, for every time step and every transition, the tightest interval
//! on its counterfactual probability that is consistent with the observation
//! under a chosen set of causal assumptions. [`interval_vi`] plans against
//! the worst (or best) model inside those intervals, [`oracle`] checks the
//! intervals against exact linear programs, and [`gumbel`] provides the
//! Gumbel-max point estimate for comparison.

pub mod bounds;
pub mod envs;
pub mod experiments;
pub mod gumbel;
pub mod interval_vi;
pub mod io;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod rng;

pub use bounds::{build_interval_cfmdp, AssumptionSet, IntervalCfMdp, ProbInterval, SupportRelation};
pub use gumbel::{build_gumbel_cfmdp, GumbelCfMdp};
pub use interval_vi::{robust_policy_eval, robust_value_iteration, sample_cfmdp, RobustMode, RobustSolution, SampledCfMdp};
pub use mdp::{CfMdp, Mdp, ObservedPath, PolicySchedule, Transition, ValueTable};
pub use oracle::{enumerate_theta_bounds, oracle_bounds, Coupling};

use thiserror::Error;

/// Any failure surfaced by the library, classified for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mdp(#[from] mdp::MdpError),
    #[error(transparent)]
    Bounds(#[from] bounds::BoundsError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Vi(#[from] interval_vi::ViError),
    #[error(transparent)]
    Gumbel(#[from] gumbel::GumbelError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Experiment(#[from] experiments::ExperimentError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// 1 for bad input or configuration, 2 for a violated invariant.
    pub fn exit_code(&self) -> i32 {
        use experiments::ExperimentError as E;
        match self {
            Error::Mdp(_) | Error::Io(_) | Error::Config(_) | Error::Gumbel(_) => 1,
            Error::Experiment(E::Config(_) | E::Mdp(_)) => 1,
            Error::Bounds(bounds::BoundsError::Path(_) | bounds::BoundsError::Precondition(_)) => 1,
            Error::Oracle(oracle::OracleError::ScaleExceeded { .. } | oracle::OracleError::Precondition(_)) => 1,
            _ => 2,
        }
    }
}
