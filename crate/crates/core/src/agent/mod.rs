//! DDPG learner: multi-head actor, critic, replay, exploration and updates.

mod actor;
mod critic;
mod ddpg;
mod noise;
mod replay;
mod scaling;

pub use actor::{Actor, ActorSpec, ActorTape, PhaseMode, RawOutput};
pub use critic::{Critic, CriticTape};
pub use ddpg::{Ddpg, LearnStats, TrainConfig};
pub use noise::{gaussian_sigma, Exploration, NoiseKind};
pub use replay::{Experience, ReplayBuffer};
pub use scaling::{
    group_expand, quantized_phase_select, straight_through_phase_grad, ActionScaler, GroupLayout,
};

use thiserror::Error;

use crate::nnet::NnError;

/// Default trunk width.
pub const HIDDEN_WIDTH: usize = 100;

/// Bound of the small-uniform initializer for output layers.
pub const SMALL_INIT: f64 = 3e-3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("invalid training setting {name} = {value}")]
    Config { name: &'static str, value: f64 },
    #[error("replay buffer holds {have} experiences, {need} needed")]
    NotReady { have: usize, need: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}
