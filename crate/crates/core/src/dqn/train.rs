use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::agent::{argmax, select_action};
use super::config::{epsilon_at, TrainConfig};
use super::replay::{Experience, ReplayBuffer};
use crate::env::{AlertEnv, EnvConfig, STATE_DIM};
use crate::error::{Error, Result};
use crate::neuro::{AdamConfig, AdamState, MlpParams, Scratch, SeedLineage};
use crate::rng::{derive_seed, rng_for, tag, SimRng};
use crate::synth::{Stream, Transaction};

/// Result of one environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// An episodic task with a fixed set of episodes per training iteration.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn episodes_per_iteration(&self) -> usize;
    /// Starts episode `episode` and returns its first observation.
    fn begin_episode(&mut self, episode: usize, rng: &mut SimRng) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<Transition>;
}

/// The alert environment replaying a fixed list of days, one episode per day.
pub struct DayEpisodes<'a> {
    env: AlertEnv,
    days: Vec<&'a [Transaction]>,
}

impl<'a> DayEpisodes<'a> {
    pub fn new(config: EnvConfig, stream: &'a Stream) -> Result<Self> {
        Ok(DayEpisodes {
            env: AlertEnv::new(config)?,
            days: stream.days().into_iter().map(|(_, t)| t).collect(),
        })
    }
}

impl Environment for DayEpisodes<'_> {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn num_actions(&self) -> usize {
        self.env.config().num_actions()
    }

    fn episodes_per_iteration(&self) -> usize {
        self.days.len()
    }

    fn begin_episode(&mut self, episode: usize, _rng: &mut SimRng) -> Result<Vec<f64>> {
        let state = self.env.reset(self.days[episode])?;
        Ok(self.env.normalize_state(&state).to_vec())
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<Transition> {
        let out = self.env.step(action, rng)?;
        Ok(Transition {
            next_state: self.env.normalize_state(&out.next_state).to_vec(),
            reward: out.reward,
            done: out.done,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    /// Mean total reward per episode.
    pub mean_reward: f64,
    /// Mean minibatch loss over the iteration's gradient steps.
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

pub const TRAINING_LOG_HEADER: &str = "iteration,mean_reward,mean_loss,epsilon";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAINING_LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.iteration, r.mean_reward, r.mean_loss, r.epsilon));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_csv().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Counters proving every update used a replay sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub env_steps: u64,
    pub pushes: u64,
    pub terminal_pushes: u64,
    pub gradient_steps: u64,
    pub sampled_batches: u64,
    pub sampled_experiences: u64,
    pub target_syncs: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub adam: AdamState,
    pub log: TrainingLog,
    pub stats: TrainStats,
    pub seeds: SeedLineage,
}

/// Deep Q-learning with experience replay and a periodically synchronized
/// target network.
///
/// Per iteration every episode of `env` is played once. Each environment
/// step picks an epsilon-greedy action, stores the transition, samples a
/// uniform minibatch with replacement and takes one Adam step on the masked
/// squared TD error.
pub fn train<E: Environment>(env: &mut E, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let d = env.state_dim();
    let k = env.num_actions();
    if k == 0 || d == 0 {
        return Err(Error::Input("environment has no actions or no features".into()));
    }
    let seeds = SeedLineage {
        root: seed,
        init: derive_seed(seed, &[tag::INIT]),
        explore: derive_seed(seed, &[tag::EXPLORE]),
        replay: derive_seed(seed, &[tag::REPLAY]),
    };
    let mut sizes = vec![d];
    sizes.extend(&config.hidden_layers);
    sizes.push(k);
    let mut online = MlpParams::init(&sizes, seeds.init)?;
    let mut target = online.clone();
    let mut adam = AdamState::new(
        &online,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut explore_rng = rng_for(seeds.explore, &[]);
    let mut replay_rng = rng_for(seeds.replay, &[]);
    let mut stats = TrainStats::default();
    let mut log = TrainingLog::default();

    let m = config.minibatch;
    let mut idx = Vec::with_capacity(m);
    let mut states = vec![0.0; m * d];
    let mut next_states = vec![0.0; m * d];
    let mut actions = vec![0usize; m];
    let mut targets = vec![0.0; m];
    let mut grads = online.zeros_like();
    let mut scratch = Scratch::default();
    let mut target_scratch = Scratch::default();

    let episodes = env.episodes_per_iteration();
    for iteration in 0..config.total_iterations {
        let epsilon = epsilon_at(iteration, config);
        let mut reward_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0u64;
        for episode in 0..episodes {
            let mut env_rng = rng_for(seed, &[tag::TRAIN, iteration as u64, episode as u64]);
            let mut state = env.begin_episode(episode, &mut env_rng)?;
            loop {
                let action = select_action(&online, &state, epsilon, &mut explore_rng)?;
                let tr = env.step(action, &mut env_rng)?;
                stats.env_steps += 1;
                reward_sum += tr.reward;
                let done = tr.done;
                buffer.push(Experience {
                    state,
                    action,
                    reward: tr.reward,
                    next_state: tr.next_state,
                    terminal: done,
                });
                stats.pushes += 1;
                stats.terminal_pushes += done as u64;

                buffer.sample_indices(m, &mut replay_rng, &mut idx)?;
                stats.sampled_batches += 1;
                stats.sampled_experiences += idx.len() as u64;
                for (j, &i) in idx.iter().enumerate() {
                    let e = buffer.get(i).expect("sampled index in range");
                    states[j * d..(j + 1) * d].copy_from_slice(&e.state);
                    next_states[j * d..(j + 1) * d].copy_from_slice(&e.next_state);
                    actions[j] = e.action;
                }
                let q_next = target.forward_batch_into(&next_states, &mut target_scratch)?;
                for (j, &i) in idx.iter().enumerate() {
                    let e = buffer.get(i).expect("sampled index in range");
                    targets[j] = if e.terminal {
                        e.reward
                    } else {
                        let row = &q_next[j * k..(j + 1) * k];
                        e.reward + config.gamma * row[argmax(row)]
                    };
                }
                let loss = online.mse_grad_into(&states, &targets, &actions, &mut grads, &mut scratch)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at iteration {iteration}, episode {episode}, gradient step {}",
                        stats.gradient_steps
                    )));
                }
                adam.step(&mut online, &grads)?;
                stats.gradient_steps += 1;
                loss_sum += loss;
                loss_count += 1;
                if stats.gradient_steps % config.target_sync as u64 == 0 {
                    target.copy_from(&online);
                    stats.target_syncs += 1;
                }

                if done {
                    break;
                }
                state = buffer.get(buffer.len() - 1).expect("just pushed").next_state.clone();
            }
        }
        log.rows.push(LogRow {
            iteration,
            mean_reward: if episodes > 0 { reward_sum / episodes as f64 } else { 0.0 },
            mean_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            epsilon,
        });
    }
    if !online.is_finite() {
        return Err(Error::Numeric("trained parameters are not finite".into()));
    }
    Ok(TrainOutcome {
        params: online,
        adam,
        log,
        stats,
        seeds,
    })
}

/// Trains a threshold policy on every day of `train_stream`.
pub fn train_on_stream(
    env_config: &EnvConfig,
    train_stream: &Stream,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if train_stream.num_days() == 0 {
        return Err(Error::Input("training stream has no days".into()));
    }
    let mut env = DayEpisodes::new(env_config.clone(), train_stream)?;
    train(&mut env, config, seed)
}
