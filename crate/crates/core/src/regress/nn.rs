//! Feed-forward network `5 -> 10 -> 10 -> 1` with rectifier hidden layers,
//! inverted dropout after each hidden layer, and a linear output. Inputs are
//! standardised with statistics of the fitting rows.
//!
//! Training minimises mean squared logarithmic error on shifted labels with
//! Adam and keeps the parameter snapshot with the lowest validation loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    check_finite, msle, Adam, FeatureVector, LabelShift, RegressError, TrainConfig, TrainingSample, N_FEATURES,
};

pub const LAYER_SIZES: [usize; 4] = [N_FEATURES, 10, 10, 1];
/// Predictions below this floor are clipped inside the log loss.
pub const CLIP_FLOOR: f64 = 1e-7;
/// Widest layer served by the allocation-free inference path.
const MAX_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Per-feature standardisation `(x - mean) / scale` applied before the
/// first layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScaling {
    pub mean: [f64; N_FEATURES],
    pub scale: [f64; N_FEATURES],
}

impl InputScaling {
    pub const IDENTITY: InputScaling = InputScaling { mean: [0.0; N_FEATURES], scale: [1.0; N_FEATURES] };

    /// Mean and population standard deviation of each feature; constant
    /// features keep scale 1.
    pub fn fit<'a>(xs: impl Iterator<Item = &'a FeatureVector>) -> Self {
        let mut n = 0.0;
        let mut mean = [0.0; N_FEATURES];
        let mut m2 = [0.0; N_FEATURES];
        for x in xs {
            n += 1.0;
            for j in 0..N_FEATURES {
                let d = x.0[j] - mean[j];
                mean[j] += d / n;
                m2[j] += d * (x.0[j] - mean[j]);
            }
        }
        if n == 0.0 {
            return InputScaling::IDENTITY;
        }
        let scale = core::array::from_fn(|j| {
            let sd = libm::sqrt(m2[j] / n);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        });
        InputScaling { mean, scale }
    }

    pub fn apply(&self, x: &FeatureVector) -> [f64; N_FEATURES] {
        core::array::from_fn(|j| (x.0[j] - self.mean[j]) / self.scale[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub inputs: InputScaling,
    pub layers: Vec<Dense>,
    pub dropout: f64,
    /// Labels were trained as `y - offset`; predictions add it back.
    pub shift: LabelShift,
}

impl NnModel {
    pub fn zeros() -> Self {
        NnModel {
            inputs: InputScaling::IDENTITY,
            layers: LAYER_SIZES.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            dropout: 0.2,
            shift: LabelShift { offset: 0.0 },
        }
    }

    pub fn init<R: Rng + ?Sized>(dropout: f64, rng: &mut R) -> Self {
        NnModel {
            inputs: InputScaling::IDENTITY,
            layers: LAYER_SIZES.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
            dropout,
            shift: LabelShift { offset: 0.0 },
        }
    }

    /// Shapes chain and end in a single output.
    pub fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers[0].inputs == N_FEATURES
            && self.layers.last().map(|l| l.outputs) == Some(1)
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self.layers.iter().all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs)
    }

    /// Prediction in label units.
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.shift.inverse(self.raw(x))
    }

    /// Network output in shifted label units, dropout off.
    pub fn raw(&self, x: &FeatureVector) -> f64 {
        let width = self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0);
        if width > MAX_WIDTH {
            return self.raw_heap(x);
        }
        let mut a = [0.0f64; MAX_WIDTH];
        let mut z = [0.0f64; MAX_WIDTH];
        a[..N_FEATURES].copy_from_slice(&self.inputs.apply(x));
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a[..layer.inputs], &mut z[..layer.outputs]);
            if i < last {
                z[..layer.outputs].iter_mut().for_each(|v| *v = v.max(0.0));
            }
            core::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    fn raw_heap(&self, x: &FeatureVector) -> f64 {
        let mut a: Vec<f64> = self.inputs.apply(x).to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.apply(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Flattened parameters, per layer weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[k..k + nb]);
            k += nb;
        }
    }
}

/// Forward pass. With `training` set, each hidden activation is zeroed with
/// probability `dropout` and survivors are scaled by `1 / (1 - dropout)`.
/// Returns the raw output in shifted label units.
pub fn nn_forward<R: Rng + ?Sized>(model: &NnModel, x: &FeatureVector, training: bool, rng: &mut R) -> f64 {
    if !training {
        return model.raw(x);
    }
    let mut scratch = Scratch::new(model);
    let masks = draw_masks(model, rng);
    scratch.forward(model, x, Some(&masks));
    scratch.output()
}

fn draw_masks<R: Rng + ?Sized>(model: &NnModel, rng: &mut R) -> Vec<Vec<f64>> {
    let keep = 1.0 - model.dropout;
    let hidden = model.layers.len() - 1;
    model.layers[..hidden]
        .iter()
        .map(|l| (0..l.outputs).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
        .collect()
}

/// Per-sample activations kept for backpropagation.
struct Scratch {
    /// `acts[0]` is the input, `acts[i+1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(model: &NnModel) -> Self {
        let mut acts = vec![vec![0.0; N_FEATURES]];
        acts.extend(model.layers.iter().map(|l| vec![0.0; l.outputs]));
        let pre = model.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        Scratch { acts, pre }
    }

    fn forward(&mut self, model: &NnModel, x: &FeatureVector, masks: Option<&[Vec<f64>]>) {
        self.acts[0].copy_from_slice(&model.inputs.apply(x));
        let last = model.layers.len() - 1;
        for (i, layer) in model.layers.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(i + 1);
            layer.apply(&head[i], &mut self.pre[i]);
            let out = &mut tail[0];
            out.copy_from_slice(&self.pre[i]);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                if let Some(m) = masks {
                    out.iter_mut().zip(&m[i]).for_each(|(v, k)| *v *= k);
                }
            }
        }
    }

    fn output(&self) -> f64 {
        self.acts.last().expect("at least one layer")[0]
    }

    /// Accumulates `dloss/dout * dout/dtheta` into `grad`.
    fn backward(&self, model: &NnModel, dout: f64, masks: Option<&[Vec<f64>]>, grad: &mut [f64]) {
        let offsets = layer_offsets(model);
        let last = model.layers.len() - 1;
        let mut delta = vec![dout];
        for i in (0..model.layers.len()).rev() {
            let layer = &model.layers[i];
            if i < last {
                // through dropout and the rectifier
                for (k, d) in delta.iter_mut().enumerate() {
                    let mask = masks.map_or(1.0, |m| m[i][k]);
                    *d *= if self.pre[i][k] > 0.0 { mask } else { 0.0 };
                }
            }
            let input = &self.acts[i];
            let base = offsets[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[base + layer.weights.len() + o] += d;
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }
}

fn layer_offsets(model: &NnModel) -> Vec<usize> {
    let mut offs = Vec::with_capacity(model.layers.len());
    let mut k = 0;
    for l in &model.layers {
        offs.push(k);
        k += l.n_params();
    }
    offs
}

/// `d/dpred (ln(1 + max(pred, floor)) - ln(1 + target))^2`.
fn msle_grad(pred: f64, target: f64) -> f64 {
    if pred <= CLIP_FLOOR {
        return 0.0;
    }
    2.0 * (libm::log1p(pred) - libm::log1p(target.max(CLIP_FLOOR))) / (1.0 + pred)
}

/// MSLE and its gradient over `batch`, dropout off. `targets` are already in
/// shifted label units.
pub fn msle_loss_and_gradient(model: &NnModel, inputs: &[FeatureVector], targets: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.n_params()];
    let mut scratch = Scratch::new(model);
    let n = inputs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        scratch.forward(model, x, None);
        let p = scratch.output();
        let d = libm::log1p(p.max(CLIP_FLOOR)) - libm::log1p(y.max(CLIP_FLOOR));
        loss += d * d / n;
        scratch.backward(model, msle_grad(p, y) / n, None, &mut grad);
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnReport {
    /// Epoch (1-based) whose snapshot was kept; 0 for a constant predictor.
    pub best_epoch: usize,
    /// MSLE on the fitting rows for the kept snapshot, dropout off.
    pub train_loss: f64,
    pub validation_loss: f64,
    /// `(train, validation)` MSLE after every epoch.
    pub history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnTraining {
    pub model: NnModel,
    pub report: NnReport,
}

fn loss_on(model: &NnModel, inputs: &[FeatureVector], targets: &[f64], idx: &[usize]) -> f64 {
    msle(idx.iter().map(|&i| (model.raw(&inputs[i]), targets[i])))
}

/// Trains on `samples`, holding out `cfg.validation_fraction` of them for
/// snapshot selection.
pub fn nn_train<R: Rng + ?Sized>(
    samples: &[TrainingSample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<NnTraining, RegressError> {
    cfg.validate()?;
    if samples.len() < cfg.batch_size {
        return Err(RegressError::InsufficientSamples { needed: cfg.batch_size, got: samples.len() });
    }
    check_finite(samples)?;

    let shift = LabelShift::fit(samples.iter().map(|s| s.label));
    let first = samples[0].label;
    if samples.iter().all(|s| s.label == first) {
        let mut model = NnModel::zeros();
        model.dropout = cfg.dropout;
        model.shift = shift;
        *model.layers.last_mut().expect("output layer").bias.first_mut().expect("one output") = 1.0;
        return Ok(NnTraining {
            model,
            report: NnReport { best_epoch: 0, train_loss: 0.0, validation_loss: 0.0, history: Vec::new() },
        });
    }

    let inputs: Vec<FeatureVector> = samples.iter().map(|s| s.features).collect();
    let targets: Vec<f64> = samples.iter().map(|s| shift.transform(s.label)).collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let n_val = (libm::round(samples.len() as f64 * cfg.validation_fraction) as usize).clamp(1, samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut model = NnModel::init(cfg.dropout, rng);
    model.shift = shift;
    model.inputs = InputScaling::fit(train_idx.iter().map(|&i| &inputs[i]));
    let mut theta = model.parameters();
    let mut opt = Adam::new(cfg.adam, theta.len());
    let mut grad = vec![0.0; theta.len()];
    let mut scratch = Scratch::new(&model);

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let n = batch.len() as f64;
            for &i in batch {
                let masks = draw_masks(&model, rng);
                scratch.forward(&model, &inputs[i], Some(&masks));
                let p = scratch.output();
                scratch.backward(&model, msle_grad(p, targets[i]) / n, Some(&masks), &mut grad);
            }
            opt.step(&mut theta, &grad);
            model.set_parameters(&theta);
        }
        let train_loss = loss_on(&model, &inputs, &targets, &train_idx);
        let val_loss = loss_on(&model, &inputs, &targets, &val_idx);
        history.push((train_loss, val_loss));
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, theta.clone()));
        }
    }

    let (validation_loss, best_epoch, snapshot) = best.expect("at least one epoch");
    model.set_parameters(&snapshot);
    let train_loss = history[best_epoch - 1].0;
    Ok(NnTraining { model, report: NnReport { best_epoch, train_loss, validation_loss, history } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn zero_network_outputs_zero() {
        let m = NnModel::zeros();
        assert!(m.is_consistent());
        let mut rng = StreamSeed::new(0).rng();
        for x in [FeatureVector::new(1, 2, 3, 4, 5), FeatureVector([-3.0, 1e3, 0.5, 7.0, -1.0])] {
            assert_eq!(nn_forward(&m, &x, false, &mut rng), 0.0);
            assert_eq!(nn_forward(&m, &x, true, &mut rng), 0.0);
        }
    }

    #[test]
    fn hand_evaluated_path() {
        // only hidden unit 0 of each layer carries signal
        let mut m = NnModel::zeros();
        m.layers[0].weights[0] = 2.0; // t
        m.layers[0].weights[4] = -1.0; // store
        m.layers[0].bias[0] = 0.5;
        m.layers[1].weights[0] = 3.0;
        m.layers[1].bias[0] = -1.0;
        m.layers[2].weights[0] = 0.25;
        m.layers[2].bias[0] = 2.0;
        let mut rng = StreamSeed::new(0).rng();
        // h1 = relu(2*3 - 4 + 0.5) = 2.5; h2 = relu(7.5 - 1) = 6.5; out = 1.625 + 2
        let x = FeatureVector::new(3, 0, 0, 0, 4);
        assert_eq!(nn_forward(&m, &x, false, &mut rng), 3.625);
        // rectifier cuts the path: h1 = relu(2 - 9 + 0.5) = 0
        let x = FeatureVector::new(1, 0, 0, 0, 9);
        assert_eq!(nn_forward(&m, &x, false, &mut rng), 2.0);
    }

    #[test]
    fn inference_is_deterministic() {
        let m = NnModel::init(0.2, &mut StreamSeed::new(4).rng());
        let x = FeatureVector::new(2, 5, 0, 1, 7);
        let mut rng = StreamSeed::new(1).rng();
        assert_eq!(nn_forward(&m, &x, false, &mut rng), nn_forward(&m, &x, false, &mut rng));
    }

    #[test]
    fn dropout_only_in_training() {
        let m = NnModel::init(0.2, &mut StreamSeed::new(4).rng());
        let x = FeatureVector::new(2, 5, 0, 1, 7);
        let mut rng = StreamSeed::new(1).rng();
        let clean = nn_forward(&m, &x, false, &mut rng);
        let noisy: Vec<f64> = (0..50).map(|_| nn_forward(&m, &x, true, &mut rng)).collect();
        assert!(noisy.iter().any(|v| *v != clean));
        assert_eq!(m.predict(&x), clean);
    }

    #[test]
    fn constant_labels_give_constant_predictor() {
        let samples: Vec<_> =
            (0..150).map(|i| TrainingSample::new(FeatureVector::new(i % 10 + 1, 0, 1, 2, 3), -7.5)).collect();
        let fit = nn_train(&samples, &TrainConfig::default(), &mut StreamSeed::new(3).rng()).unwrap();
        for s in &samples {
            assert_eq!(fit.model.predict(&s.features), -7.5);
        }
    }

    #[test]
    fn needs_a_full_batch() {
        let samples = vec![TrainingSample::new(FeatureVector::new(1, 0, 0, 0, 0), 1.0); 99];
        assert!(matches!(
            nn_train(&samples, &TrainConfig::default(), &mut StreamSeed::new(3).rng()),
            Err(RegressError::InsufficientSamples { needed: 100, got: 99 })
        ));
    }
}
