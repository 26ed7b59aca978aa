use rand::Rng;

use super::replay::Experience;
use crate::env::{normalize_state, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::neuro::MlpParams;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice: uniform over actions with probability `epsilon`,
/// otherwise the greedy action of `qnet`.
pub fn select_action<R: Rng + ?Sized>(qnet: &MlpParams, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        return Ok(rng.random_range(0..qnet.output_dim()));
    }
    Ok(argmax(&qnet.forward(state)?))
}

/// Regression targets `r + gamma * max_a' Q_target(s', a')`, cut to `r` on
/// terminal transitions.
pub fn td_targets(batch: &[&Experience], target: &MlpParams, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    batch
        .iter()
        .map(|e| {
            if e.terminal {
                Ok(e.reward)
            } else {
                let q = target.forward(&e.next_state)?;
                Ok(e.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
        })
        .collect()
}

/// Deterministic argmax policy over a frozen Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    qnet: MlpParams,
}

impl GreedyPolicy {
    pub fn new(qnet: MlpParams) -> Self {
        GreedyPolicy { qnet }
    }

    pub fn qnet(&self) -> &MlpParams {
        &self.qnet
    }

    pub fn act(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.qnet.forward(features)?))
    }

    /// Action for an alert-environment state under `config`'s scaling.
    pub fn act_on(&self, state: &EnvState, config: &EnvConfig) -> Result<usize> {
        self.act(&normalize_state(state, config))
    }
}

pub fn greedy_policy(qnet: MlpParams) -> GreedyPolicy {
    GreedyPolicy::new(qnet)
}
