//! Deep Q-learning for hourly threshold selection.

mod agent;
mod config;
mod replay;
mod train;

pub use agent::{argmax, greedy_policy, select_action, td_targets, GreedyPolicy};
pub use config::{epsilon_at, EpsilonDecay, TrainConfig};
pub use replay::{Experience, ReplayBuffer};
pub use train::{
    train, train_on_stream, DayEpisodes, Environment, LogRow, TrainOutcome, TrainStats, TrainingLog, Transition,
    TRAINING_LOG_HEADER,
};
