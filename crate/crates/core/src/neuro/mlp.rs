use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

/// Dense layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64], rectify: bool) {
        for (o, (row, b)) in self.weights.chunks_exact(self.inputs).zip(&self.biases).enumerate() {
            let mut acc = *b;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out[o] = if rectify { acc.max(0.0) } else { acc };
        }
    }
}

/// Fully connected network: rectifier on hidden layers, identity on the
/// output layer. Also used as the container for gradients and optimizer
/// moments, which share its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        Ok(MlpParams {
            layers: layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`) and zero
    /// biases, deterministic in `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        let mut rng = rng_for(seed, &[tag::INIT]);
        for layer in &mut params.layers {
            let bound = glorot_bound(layer.inputs, layer.outputs);
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Shape(format!("layer {i} has inconsistent dimensions")));
            }
        }
        if let Some(i) = layers.windows(2).position(|w| w[0].outputs != w[1].inputs) {
            return Err(Error::Shape(format!("layer {} output does not feed layer {}", i, i + 1)));
        }
        Ok(MlpParams { layers })
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Every parameter in a fixed order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|v| *v = value);
    }

    pub fn copy_from(&mut self, other: &MlpParams) {
        debug_assert!(self.same_shape(other));
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
    }

    fn widest(&self) -> usize {
        self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let width = self.widest();
        let mut a = input.to_vec();
        a.resize(width, 0.0);
        let mut b = vec![0.0; width];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a[..layer.inputs], &mut b[..layer.outputs], i != last);
            std::mem::swap(&mut a, &mut b);
        }
        a.truncate(self.output_dim());
        Ok(a)
    }

    /// Forward pass over `inputs`, a row-major `n x input_dim` matrix.
    /// Returns the row-major `n x output_dim` Q matrix.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let n = self.batch_rows(inputs)?;
        let mut scratch = Scratch::default();
        self.forward_into(inputs, n, &mut scratch);
        Ok(scratch.out)
    }

    fn batch_rows(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if inputs.len() % d != 0 {
            return Err(Error::Shape(format!("batch of {} values is not a multiple of {d}", inputs.len())));
        }
        Ok(inputs.len() / d)
    }

    /// Batched forward pass. Activations are kept feature-major in
    /// `scratch.acts[l]` (`outputs x n`); the final layer is also copied
    /// row-major into `scratch.out`.
    fn forward_into(&self, inputs: &[f64], n: usize, scratch: &mut Scratch) {
        let d = self.input_dim();
        scratch.x0.resize(d * n, 0.0);
        for (m, row) in inputs.chunks_exact(d).enumerate() {
            for (i, &v) in row.iter().enumerate() {
                scratch.x0[i * n + m] = v;
            }
        }
        scratch.acts.resize_with(self.layers.len(), Vec::new);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = scratch.acts.split_at_mut(l);
            let out = &mut rest[0];
            out.resize(n * layer.outputs, 0.0);
            let src: &[f64] = if l == 0 { &scratch.x0 } else { &done[l - 1] };
            // Same summation order as `Layer::apply`, so single and batched
            // passes agree exactly.
            for ((y, row), &b) in out.chunks_exact_mut(n).zip(layer.weights.chunks_exact(layer.inputs)).zip(&layer.biases) {
                affine_column(y, row, b, src, n);
                if l != last {
                    for yv in y.iter_mut() {
                        *yv = yv.max(0.0);
                    }
                }
            }
        }
        let k = self.output_dim();
        scratch.out.resize(n * k, 0.0);
        for (o, col) in scratch.acts[last].chunks_exact(n).enumerate() {
            for (m, &v) in col.iter().enumerate() {
                scratch.out[m * k + o] = v;
            }
        }
    }

    /// Masked mean-squared error and its gradient.
    ///
    /// `inputs` is a row-major `n x input_dim` batch; sample `m` contributes
    /// `(targets[m] - q_m[actions[m]])^2` and only that output unit receives
    /// gradient.
    pub fn mse_grad(&self, inputs: &[f64], targets: &[f64], actions: &[usize]) -> Result<(MlpParams, f64)> {
        let mut grads = self.zeros_like();
        let mut scratch = Scratch::default();
        let loss = self.mse_grad_into(inputs, targets, actions, &mut grads, &mut scratch)?;
        Ok((grads, loss))
    }

    /// As [`mse_grad`](Self::mse_grad), overwriting `grads` and reusing the
    /// buffers in `scratch`.
    pub fn mse_grad_into(
        &self,
        inputs: &[f64],
        targets: &[f64],
        actions: &[usize],
        grads: &mut MlpParams,
        scratch: &mut Scratch,
    ) -> Result<f64> {
        let n = self.batch_rows(inputs)?;
        if n == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if targets.len() != n || actions.len() != n {
            return Err(Error::Shape(format!(
                "batch of {n} inputs with {} targets and {} actions",
                targets.len(),
                actions.len()
            )));
        }
        let k = self.output_dim();
        if let Some(&a) = actions.iter().find(|&&a| a >= k) {
            return Err(Error::Action { action: a, num_actions: k });
        }
        if !grads.same_shape(self) {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }

        self.forward_into(inputs, n, scratch);
        grads.fill(0.0);
        let Scratch {
            x0,
            acts,
            delta,
            delta_prev,
            err,
            wcol,
            ..
        } = scratch;

        let depth = self.layers.len();
        let scale = 2.0 / n as f64;
        let mut loss = 0.0;
        err.resize(n, 0.0);
        for m in 0..n {
            let e = acts[depth - 1][actions[m] * n + m] - targets[m];
            loss += e * e;
            err[m] = scale * e;
        }

        // Output layer: only the selected unit carries error.
        let top = &self.layers[depth - 1];
        let x_top: &[f64] = if depth == 1 { x0 } else { &acts[depth - 2] };
        {
            let g = &mut grads.layers[depth - 1];
            for m in 0..n {
                let (a, d) = (actions[m], err[m]);
                let row = &mut g.weights[a * top.inputs..(a + 1) * top.inputs];
                for (i, gw) in row.iter_mut().enumerate() {
                    *gw += d * x_top[i * n + m];
                }
                g.biases[a] += d;
            }
        }
        if depth == 1 {
            return Ok(loss / n as f64);
        }
        delta.resize(top.inputs * n, 0.0);
        for (i, (dcol, xcol)) in delta.chunks_exact_mut(n).zip(x_top.chunks_exact(n)).enumerate() {
            for m in 0..n {
                dcol[m] = if xcol[m] > 0.0 { err[m] * top.weight(actions[m], i) } else { 0.0 };
            }
        }

        // Hidden layers, from the top down; `delta` is `outputs x n`.
        for l in (0..depth - 1).rev() {
            let layer = &self.layers[l];
            let x: &[f64] = if l == 0 { x0 } else { &acts[l - 1] };
            let g = &mut grads.layers[l];
            for (o, dcol) in delta.chunks_exact(n).enumerate() {
                g.biases[o] = sum(dcol);
                let grow = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xcol) in grow.iter_mut().zip(x.chunks_exact(n)) {
                    *gw = dot(dcol, xcol);
                }
            }
            if l == 0 {
                break;
            }
            delta_prev.resize(layer.inputs * n, 0.0);
            for (i, (pcol, xcol)) in delta_prev.chunks_exact_mut(n).zip(x.chunks_exact(n)).enumerate() {
                wcol.clear();
                wcol.extend((0..layer.outputs).map(|o| layer.weight(o, i)));
                affine_column(pcol, wcol, 0.0, delta, n);
                for (p, &xv) in pcol.iter_mut().zip(xcol) {
                    if xv <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            std::mem::swap(delta, delta_prev);
        }
        Ok(loss / n as f64)
    }
}

const LANES: usize = 4;
const BLOCK: usize = 8;

/// `y[m] = b + sum_i w[i] * x[i * n + m]`, summed in input order.
fn affine_column(y: &mut [f64], w: &[f64], b: f64, x: &[f64], n: usize) {
    let full = n - n % BLOCK;
    for m0 in (0..full).step_by(BLOCK) {
        let mut acc = [b; BLOCK];
        for (i, &wi) in w.iter().enumerate() {
            let xs = &x[i * n + m0..i * n + m0 + BLOCK];
            for j in 0..BLOCK {
                acc[j] += wi * xs[j];
            }
        }
        y[m0..m0 + BLOCK].copy_from_slice(&acc);
    }
    for m in full..n {
        let mut acc = b;
        for (i, &wi) in w.iter().enumerate() {
            acc += wi * x[i * n + m];
        }
        y[m] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..LANES {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let c = a.chunks_exact(LANES);
    let tail: f64 = c.remainder().iter().sum();
    for x in c {
        for j in 0..LANES {
            acc[j] += x[j];
        }
    }
    acc.iter().sum::<f64>() + tail
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Reusable buffers for batched passes.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    x0: Vec<f64>,
    acts: Vec<Vec<f64>>,
    out: Vec<f64>,
    err: Vec<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    wcol: Vec<f64>,
}

impl Scratch {
    /// Row-major output matrix of the most recent batched forward pass.
    pub fn outputs(&self) -> &[f64] {
        &self.out
    }
}

impl MlpParams {
    /// Batched forward pass into `scratch`; read results with
    /// [`Scratch::outputs`].
    pub fn forward_batch_into<'s>(&self, inputs: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64]> {
        let n = self.batch_rows(inputs)?;
        self.forward_into(inputs, n, scratch);
        Ok(scratch.outputs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIZES: [usize; 4] = [5, 20, 10, 11];

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = MlpParams::init(&SIZES, 9).unwrap();
        let b = MlpParams::init(&SIZES, 9).unwrap();
        let c = MlpParams::init(&SIZES, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert_eq!(a.layer_sizes(), SIZES.to_vec());
        assert_eq!(a.num_params(), 5 * 20 + 20 + 20 * 10 + 10 + 10 * 11 + 11);
    }

    #[test]
    fn init_respects_glorot_bound() {
        let p = MlpParams::init(&SIZES, 3).unwrap();
        // sqrt(6 / 25) for the first layer.
        let bound = 0.489_897_948_556_635_6;
        assert!((glorot_bound(5, 20) - bound).abs() < 1e-15);
        assert!(p.layers()[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(p.layers()[0].weights.iter().any(|w| w.abs() > bound / 2.0));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&SIZES).unwrap();
        assert_eq!(p.forward(&[0.3, 0.1, 0.9, 0.0, 1.0]).unwrap(), vec![0.0; 11]);
    }

    #[test]
    fn shape_errors() {
        let p = MlpParams::zeros(&SIZES).unwrap();
        assert!(matches!(p.forward(&[0.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(p.forward_batch(&[0.0; 7]), Err(Error::Shape(_))));
        assert!(matches!(p.mse_grad(&[], &[], &[]), Err(Error::Input(_))));
        assert!(matches!(p.mse_grad(&[0.0; 5], &[0.0, 1.0], &[0]), Err(Error::Shape(_))));
        assert!(MlpParams::zeros(&[5]).is_err());
    }

    /// 1 -> 2 -> 1 network evaluated by hand.
    fn tiny() -> MlpParams {
        MlpParams::from_layers(vec![
            Layer {
                inputs: 1,
                outputs: 2,
                weights: vec![2.0, -1.0],
                biases: vec![0.5, 0.25],
            },
            Layer {
                inputs: 2,
                outputs: 1,
                weights: vec![3.0, 4.0],
                biases: vec![-1.0],
            },
        ])
        .unwrap()
    }

    #[test]
    fn hand_computed_forward() {
        let p = tiny();
        // x = 0.5: hidden = [relu(1.5), relu(-0.25)] = [1.5, 0]; q = 4.5 - 1 = 3.5
        assert_eq!(p.forward(&[0.5]).unwrap(), vec![3.5]);
        // x = 0.1: hidden = [0.7, 0.15]; q = 2.1 + 0.6 - 1 = 1.7
        assert!((p.forward(&[0.1]).unwrap()[0] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn hand_derived_gradient() {
        // x = 0.5, target 2.5: e = 3.5 - 2.5 = 1, dL/dq = 2.
        let p = tiny();
        let (g, loss) = p.mse_grad(&[0.5], &[2.5], &[0]).unwrap();
        assert_eq!(loss, 1.0);
        let out = &g.layers()[1];
        assert_eq!(out.weights, vec![2.0 * 1.5, 0.0]);
        assert_eq!(out.biases, vec![2.0]);
        let hidden = &g.layers()[0];
        // Only the active unit passes gradient: 2 * 3 = 6; dW = 6 * 0.5.
        assert_eq!(hidden.biases, vec![6.0, 0.0]);
        assert_eq!(hidden.weights, vec![3.0, 0.0]);
    }

    #[test]
    fn perfect_targets_give_zero_gradient() {
        let p = MlpParams::init(&SIZES, 1).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.9, 0.8, 0.7, 0.6, 0.5];
        let q = p.forward_batch(&x).unwrap();
        let targets = [q[3], q[11 + 7]];
        let (g, loss) = p.mse_grad(&x, &targets, &[3, 7]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_forward_matches_single() {
        let p = MlpParams::init(&SIZES, 2).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).fract()).collect();
        let batch = p.forward_batch(&xs).unwrap();
        for (row, x) in batch.chunks(11).zip(xs.chunks(5)) {
            assert_eq!(row, p.forward(x).unwrap().as_slice());
        }
    }

    #[test]
    fn unselected_output_rows_get_no_gradient() {
        let p = MlpParams::init(&SIZES, 4).unwrap();
        let (g, _) = p.mse_grad(&[0.2, 0.4, 0.6, 0.8, 1.0], &[5.0], &[6]).unwrap();
        let out = &g.layers()[2];
        for o in (0..11).filter(|&o| o != 6) {
            assert!(out.weights[o * 10..(o + 1) * 10].iter().all(|&w| w == 0.0));
            assert_eq!(out.biases[o], 0.0);
        }
        assert_ne!(out.biases[6], 0.0);
    }
}
