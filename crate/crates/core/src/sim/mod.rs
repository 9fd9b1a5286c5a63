//! Scenarios, the simulated human and the closed-loop episode runner.

mod episode;
mod human;
mod oracle;
mod scenario;

use thiserror::Error;

pub use episode::{run_episode, run_episode_observed, EpisodeLog, Method, StepContext, StepRecord};
pub use human::{shift_plan, SimulatedHuman};
pub use oracle::{exact_up_gain, oracle_probe, OracleSample};
pub use scenario::{build_scenario, Jitter, ScenarioConfig, ScenarioKind, TrafficCar};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Optimizer(#[from] crate::diffopt::DiffOptError),
    #[error(transparent)]
    Switcher(#[from] crate::switcher::SwitcherError),
}
