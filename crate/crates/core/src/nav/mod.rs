//! Grid-world navigation: discretized plant floorplan (10 cm cells),
//! per-episode randomized radiation zones, potential-shaped rewards, masked
//! local observations, four-direction actions, and a Double Q-learning
//! trainer with a deterministic evaluator.

mod env;
mod learn;
mod map;

pub use env::{Action, GridWorld, NavConfig, NormMode, Observation, RadiationZone, RewardParams, StepOutcome};
pub use learn::{
    epsilon_at, evaluate, train, EpisodeOutcome, EpisodeRecord, Estimator, EvalReport, Policy,
    TrainConfig,
};
pub use map::GridMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("map error: {0}")]
    Map(String),
    #[error("io error reading map: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid radiation zone placement after {0} rejections")]
    PlacementError(usize),
    #[error("step called after episode termination")]
    EpisodeDone,
    #[error("training diverged: non-finite loss at step {0}")]
    TrainDiverged(usize),
    #[error("policy file error: {0}")]
    PolicyFile(String),
}
