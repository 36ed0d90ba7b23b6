//! Two-layer MLP head: dropout, affine, ReLU, dropout, affine, softmax.
//! Matrices are flat row-major `Vec<f64>`s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::corpus::Task;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
/// Probabilities are clamped from below before taking the log.
pub const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden_dim: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub task: Task,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_dim: 256,
            dropout: 0.2,
            lr: 2e-4,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            task: Task::Task1A,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.hidden_dim == 0 || self.max_epochs == 0 {
            return bad("batch_size, hidden_dim and max_epochs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// hidden × input
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// classes × hidden
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub adam: AdamState,
}

/// Gradients with the same layout as [`HeadParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(p: &HeadParams) -> Self {
        Gradients {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    /// All entries in parameter order (w1, b1, w2, b2).
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        let n = hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
        HeadParams {
            input_dim,
            hidden_dim,
            num_classes,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; num_classes * hidden_dim],
            b2: vec![0.0; num_classes],
            adam: AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
        let a2 = (6.0 / (hidden_dim + num_classes) as f64).sqrt();
        p.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
        p
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry `i` in parameter order (w1, b1, w2, b2).
    pub fn get(&self, i: usize) -> f64 {
        *self.slot(i)
    }

    pub fn set(&mut self, i: usize, value: f64) {
        *self.slot_mut(i) = value;
    }

    fn slot(&self, mut i: usize) -> &f64 {
        for t in [&self.w1, &self.b1, &self.w2, &self.b2] {
            if i < t.len() {
                return &t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    fn slot_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .all(|x| x.is_finite())
    }
}

/// Inverted-dropout masks for one example: entries are 0 or `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl DropoutMask {
    pub fn identity(input_dim: usize, hidden_dim: usize) -> Self {
        DropoutMask {
            input: vec![1.0; input_dim],
            hidden: vec![1.0; hidden_dim],
        }
    }

    pub fn draw<R: Rng>(input_dim: usize, hidden_dim: usize, p: f64, rng: &mut R) -> Self {
        if p == 0.0 {
            return Self::identity(input_dim, hidden_dim);
        }
        let keep = 1.0 / (1.0 - p);
        let mut bit = |_| if rng.gen::<f64>() < p { 0.0 } else { keep };
        let input = (0..input_dim).map(&mut bit).collect();
        let hidden = (0..hidden_dim).map(&mut bit).collect();
        DropoutMask { input, hidden }
    }
}

struct Activations {
    x: Vec<f64>,
    z1: Vec<f64>,
    /// ReLU output after the hidden dropout mask.
    a: Vec<f64>,
    probs: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn run(
    params: &HeadParams,
    input: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<Activations, ClassifierError> {
    let (d, h, c) = (params.input_dim, params.hidden_dim, params.num_classes);
    if input.len() != d {
        return Err(ClassifierError::DimMismatch {
            expected: d,
            found: input.len(),
        });
    }
    let x: Vec<f64> = match mask {
        Some(m) => input.iter().zip(&m.input).map(|(v, k)| v * k).collect(),
        None => input.to_vec(),
    };
    let mut z1 = params.b1.clone();
    for (j, z) in z1.iter_mut().enumerate() {
        *z += params.w1[j * d..(j + 1) * d]
            .iter()
            .zip(&x)
            .map(|(w, v)| w * v)
            .sum::<f64>();
    }
    let mut a: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
    if let Some(m) = mask {
        a.iter_mut().zip(&m.hidden).for_each(|(v, k)| *v *= k);
    }
    let mut z2 = params.b2.clone();
    for (k, z) in z2.iter_mut().enumerate() {
        *z += params.w2[k * h..(k + 1) * h]
            .iter()
            .zip(&a)
            .map(|(w, v)| w * v)
            .sum::<f64>();
    }
    if z2.iter().any(|z| !z.is_finite()) {
        return Err(ClassifierError::NonFiniteActivation);
    }
    let probs = softmax(&z2);
    debug_assert_eq!(probs.len(), c);
    Ok(Activations { x, z1, a, probs })
}

/// Class probabilities. Dropout masks are drawn from `rng` only when
/// `train_mode` is set.
pub fn forward<R: Rng>(
    params: &HeadParams,
    input: &[f64],
    train_mode: bool,
    dropout: f64,
    rng: &mut R,
) -> Result<Vec<f64>, ClassifierError> {
    let mask =
        train_mode.then(|| DropoutMask::draw(params.input_dim, params.hidden_dim, dropout, rng));
    Ok(run(params, input, mask.as_ref())?.probs)
}

/// Eval-mode forward pass.
pub fn predict_probs(params: &HeadParams, input: &[f64]) -> Result<Vec<f64>, ClassifierError> {
    Ok(run(params, input, None)?.probs)
}

/// Cross-entropy of the gold class.
pub fn loss(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].max(MIN_PROB).ln()
}

/// Mean loss over the batch under fixed masks.
pub fn batch_loss(
    params: &HeadParams,
    batch: &[(&[f64], usize)],
    masks: &[DropoutMask],
) -> Result<f64, ClassifierError> {
    let mut total = 0.0;
    for ((x, gold), m) in batch.iter().zip(masks) {
        total += loss(&run(params, x, Some(m))?.probs, *gold);
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its analytic gradient under fixed masks.
pub fn batch_gradients(
    params: &HeadParams,
    batch: &[(&[f64], usize)],
    masks: &[DropoutMask],
) -> Result<(f64, Gradients), ClassifierError> {
    let (d, h) = (params.input_dim, params.hidden_dim);
    let n = batch.len() as f64;
    let mut g = Gradients::zeros_like(params);
    let mut total = 0.0;
    for ((input, gold), mask) in batch.iter().zip(masks) {
        let act = run(params, input, Some(mask))?;
        total += loss(&act.probs, *gold);
        if act.probs[*gold] < MIN_PROB {
            // Clamped region: the loss is flat in every parameter.
            continue;
        }
        let dz2: Vec<f64> = act
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| (p - if k == *gold { 1.0 } else { 0.0 }) / n)
            .collect();
        let mut dz1 = vec![0.0; h];
        for (k, dz) in dz2.iter().enumerate() {
            g.b2[k] += dz;
            let row = &params.w2[k * h..(k + 1) * h];
            for j in 0..h {
                g.w2[k * h + j] += dz * act.a[j];
                dz1[j] += dz * row[j];
            }
        }
        let upstream = act.z1.iter().zip(&dz1).zip(&mask.hidden);
        for (j, ((z, g1), keep)) in upstream.enumerate() {
            if *z <= 0.0 {
                continue;
            }
            let dz = g1 * keep;
            g.b1[j] += dz;
            for (gw, x) in g.w1[j * d..(j + 1) * d].iter_mut().zip(&act.x) {
                *gw += dz * x;
            }
        }
    }
    if g.flat().iter().any(|x| !x.is_finite()) {
        return Err(ClassifierError::NonFiniteGradient);
    }
    Ok((total / n, g))
}

/// One Adam update in place.
pub fn adam_update(params: &mut HeadParams, grads: &Gradients, lr: f64) {
    params.adam.step += 1;
    let t = params.adam.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, g) in grads.flat().into_iter().enumerate() {
        let m = ADAM_BETA1 * params.adam.m[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * params.adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
        params.adam.m[i] = m;
        params.adam.v[i] = v;
        let step = lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPSILON);
        let value = params.get(i) - step;
        params.set(i, value);
    }
}

/// Backprop over one minibatch followed by an Adam step; returns the batch
/// loss before the update.
pub fn train_step<R: Rng>(
    params: &mut HeadParams,
    batch: &[(&[f64], usize)],
    config: &HeadConfig,
    rng: &mut R,
) -> Result<f64, ClassifierError> {
    let masks: Vec<DropoutMask> = batch
        .iter()
        .map(|_| DropoutMask::draw(params.input_dim, params.hidden_dim, config.dropout, rng))
        .collect();
    let (loss, grads) = batch_gradients(params, batch, &masks)?;
    adam_update(params, &grads, config.lr);
    Ok(loss)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, with masks held fixed. The relative error of a pair
/// `(a, n)` is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    params: &HeadParams,
    batch: &[(&[f64], usize)],
    masks: &[DropoutMask],
    h: f64,
) -> Result<f64, ClassifierError> {
    let (_, grads) = batch_gradients(params, batch, masks)?;
    let analytic = grads.flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.into_iter().enumerate() {
        let orig = probe.get(i);
        probe.set(i, orig + h);
        let up = batch_loss(&probe, batch, masks)?;
        probe.set(i, orig - h);
        let down = batch_loss(&probe, batch, masks)?;
        probe.set(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
