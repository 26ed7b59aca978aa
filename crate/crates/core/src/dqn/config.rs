use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonDecay {
    /// `start * (1 - decay)^iteration`
    Multiplicative,
    /// `start - decay * iteration`
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_decay_mode: EpsilonDecay,
    pub epsilon_floor: f64,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    pub total_iterations: usize,
    /// Gradient steps between copies of the online network into the target
    /// network.
    pub target_sync: usize,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            epsilon_start: 0.5,
            epsilon_decay: 0.05,
            epsilon_decay_mode: EpsilonDecay::Multiplicative,
            epsilon_floor: 0.1,
            buffer_capacity: 160_000,
            minibatch: 1024,
            total_iterations: 100,
            target_sync: 500,
            learning_rate: 1e-4,
            hidden_layers: vec![20, 10],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        if !(0.0 <= self.epsilon_floor && self.epsilon_floor <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return Err(Error::config("epsilon_start", "need 0 <= epsilon_floor <= epsilon_start <= 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(Error::config("epsilon_decay", "must lie in [0, 1]"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be positive"));
        }
        if self.minibatch == 0 || self.minibatch > self.buffer_capacity {
            return Err(Error::config("minibatch", "must be in 1..=buffer_capacity"));
        }
        if self.target_sync == 0 {
            return Err(Error::config("target_sync", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be finite and positive"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden_layers", "layer widths must be positive"));
        }
        Ok(())
    }
}

/// Exploration probability for a 0-based training iteration.
pub fn epsilon_at(iteration: usize, config: &TrainConfig) -> f64 {
    let raw = match config.epsilon_decay_mode {
        EpsilonDecay::Multiplicative => config.epsilon_start * (1.0 - config.epsilon_decay).powi(iteration as i32),
        EpsilonDecay::Absolute => config.epsilon_start - config.epsilon_decay * iteration as f64,
    };
    raw.max(config.epsilon_floor)
}
