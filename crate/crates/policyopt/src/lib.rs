//! Policy optimization against rewards derived from translated
//! demonstrations.
//!
//! Two learners share the rollout machinery: a natural-gradient update
//! for a Gaussian MLP policy (trust-region step with a conjugate-gradient
//! solve against the exact Fisher), and a fitted time-varying LQR that
//! regresses linear dynamics from rollouts and solves a quadratic
//! tracking cost in feature space. Policies act on compact state vectors
//! (positions, optionally with encoder features appended); rewards come
//! from rendered observations.

mod lqr;
mod npg;
mod policy;
mod rollout;
mod train;

pub use lqr::{
    fit_linear_dynamics, lqr_backward, AffineDynamics, LinearGaussianController, LqrConfig,
    QuadraticCost, Transition,
};
pub use npg::{natural_pg_update, PgConfig, PgUpdateReport};
pub use policy::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use rollout::{
    run_rollout, Agent, RewardSource, Rollout, ScriptedAgent, StateEncoder, StepView,
    UniformRandomAgent,
};
pub use train::{
    evaluate, feature_tracking_cost, train_lqr, train_natural_pg, EvalStats, LqrTrainConfig,
    PgTrainConfig, TrainPoint,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Env(#[from] envsim::EnvError),
    #[error(transparent)]
    Reward(#[from] reward::RewardError),
    #[error(transparent)]
    Nn(#[from] nncore::NnError),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;
