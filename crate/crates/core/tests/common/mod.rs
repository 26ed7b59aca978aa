#![allow(dead_code)]

use alertq::dqn::{train, Environment, TrainConfig, Transition};
use alertq::neuro::MlpParams;
use alertq::rng::SimRng;
use alertq::Result;
use rand::Rng;

pub const GAMMA: f64 = 0.9;

/// Deterministic three-state chain. Rewards are indexed `[state][action]`;
/// `NEXT[s][a]` of `None` ends the episode.
pub const REWARD: [[f64; 2]; 3] = [[1.0, 2.0], [3.0, 1.0], [1.0, 2.0]];
pub const NEXT: [[Option<usize>; 2]; 3] = [[Some(1), Some(2)], [Some(2), Some(2)], [None, None]];

pub fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 3];
    v[s] = 1.0;
    v
}

/// Optimal action values by value iteration to a fixed point.
pub fn value_iteration() -> [[f64; 2]; 3] {
    let mut q = [[0.0f64; 2]; 3];
    loop {
        let mut next = q;
        for s in 0..3 {
            for a in 0..2 {
                let future = NEXT[s][a].map_or(0.0, |t| q[t][0].max(q[t][1]));
                next[s][a] = REWARD[s][a] + GAMMA * future;
            }
        }
        let delta = (0..3).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| (next[s][a] - q[s][a]).abs()).fold(0.0, f64::max);
        q = next;
        if delta == 0.0 {
            return q;
        }
    }
}

/// Episodes start in each state in turn.
pub struct ChainMdp {
    state: usize,
}

impl ChainMdp {
    pub fn new() -> Self {
        ChainMdp { state: 0 }
    }
}

impl Environment for ChainMdp {
    fn state_dim(&self) -> usize {
        3
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn episodes_per_iteration(&self) -> usize {
        3
    }
    fn begin_episode(&mut self, episode: usize, _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.state = episode % 3;
        Ok(one_hot(self.state))
    }
    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<Transition> {
        let reward = REWARD[self.state][action];
        match NEXT[self.state][action] {
            Some(t) => {
                self.state = t;
                Ok(Transition { next_state: one_hot(t), reward, done: false })
            }
            None => Ok(Transition { next_state: one_hot(self.state), reward, done: true }),
        }
    }
}

/// Small-network settings giving about 2000 gradient steps on [`ChainMdp`]
/// (six steps per iteration).
pub fn chain_config() -> TrainConfig {
    TrainConfig {
        gamma: GAMMA,
        epsilon_start: 1.0,
        epsilon_floor: 0.5,
        buffer_capacity: 5000,
        minibatch: 32,
        total_iterations: 334,
        target_sync: 50,
        learning_rate: 1e-2,
        hidden_layers: vec![16],
        ..TrainConfig::default()
    }
}

pub struct ChainResult {
    pub q: [[f64; 2]; 3],
    pub policy_optimal: bool,
    pub max_rel_error: f64,
    pub steps: u64,
}

pub fn train_chain(seed: u64) -> ChainResult {
    let mut env = ChainMdp::new();
    let out = train(&mut env, &chain_config(), seed).expect("chain training");
    let q_star = value_iteration();
    let mut q = [[0.0; 2]; 3];
    let mut policy_optimal = true;
    let mut max_rel_error: f64 = 0.0;
    for s in 0..3 {
        let v = out.params.forward(&one_hot(s)).unwrap();
        q[s] = [v[0], v[1]];
        let greedy = if v[1] > v[0] { 1 } else { 0 };
        let best = if q_star[s][1] > q_star[s][0] { 1 } else { 0 };
        policy_optimal &= greedy == best;
        for a in 0..2 {
            max_rel_error = max_rel_error.max((v[a] - q_star[s][a]).abs() / q_star[s][a].abs());
        }
    }
    ChainResult { q, policy_optimal, max_rel_error, steps: out.stats.gradient_steps }
}

/// Loss recomputed from single-sample forward passes.
pub fn reference_loss(params: &MlpParams, inputs: &[f64], targets: &[f64], actions: &[usize]) -> f64 {
    let d = params.input_dim();
    let n = targets.len();
    (0..n)
        .map(|m| {
            let q = params.forward(&inputs[m * d..(m + 1) * d]).unwrap();
            (q[actions[m]] - targets[m]).powi(2)
        })
        .sum::<f64>()
        / n as f64
}

pub struct GradCheck {
    pub checked: usize,
    pub worst_rel_error: f64,
}

/// Compares analytic gradients against central differences of
/// [`reference_loss`] on one random instance.
pub fn gradient_check(rng: &mut SimRng, instance: u64) -> GradCheck {
    const H: f64 = 1e-5;
    let sizes = [5, 20, 10, 11];
    let params = MlpParams::init(&sizes, 1000 + instance).unwrap();
    // Random biases so hidden units are not all active at once.
    let mut params = params;
    for layer in params.layers_mut() {
        for b in &mut layer.biases {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let n = 16;
    let inputs: Vec<f64> = (0..n * sizes[0]).map(|_| rng.random::<f64>()).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..sizes[3])).collect();
    let (grads, loss) = params.mse_grad(&inputs, &targets, &actions).unwrap();
    assert!((loss - reference_loss(&params, &inputs, &targets, &actions)).abs() < 1e-12);

    let analytic: Vec<f64> = grads.values().copied().collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (j, &g) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.values_mut().nth(j).unwrap() += H;
        let mut minus = params.clone();
        *minus.values_mut().nth(j).unwrap() -= H;
        let numeric = (reference_loss(&plus, &inputs, &targets, &actions) - reference_loss(&minus, &inputs, &targets, &actions)) / (2.0 * H);
        let scale = g.abs().max(numeric.abs());
        if scale > 1e-8 {
            worst = worst.max((g - numeric).abs() / scale);
            checked += 1;
        }
    }
    GradCheck { checked, worst_rel_error: worst }
}

/// Bias-corrected Adam on one scalar with a constant gradient, written out
/// step by step.
pub fn adam_by_hand(theta0: f64, g: f64, steps: u32) -> f64 {
    let (lr, b1, b2, eps) = (1e-4, 0.9, 0.999, 1e-8);
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    for t in 1..=steps as i32 {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - f64::powi(b1, t));
        let v_hat = v / (1.0 - f64::powi(b2, t));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    theta
}
