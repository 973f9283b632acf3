//! The base learner `p(x) = σ(head(f(x)))`: a one-hidden-layer network whose
//! hidden activations are the feature space used by every KNN operation.
//!
//! Training minimises the joint labelled + pseudo-labelled loss with
//! mini-batch SGD (or Adam), and keeps an exponential moving average of the
//! parameters that is only used for evaluation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataPools, LabelledEntry, TaskKind};
use crate::error::{AcplError, Result};

pub const DEFAULT_EMA_DECAY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Linear extractor.
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Identity => h,
            Activation::Tanh => h.tanh(),
            Activation::Relu => h.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, h: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Relu),
            other => Err(AcplError::Checkpoint(format!("unknown activation code {other}"))),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = AcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(AcplError::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Extractor is the identity map (requires `feature_dim == input_dim`), head zero.
    Identity,
    /// Glorot-uniform weights, zero biases.
    Xavier,
    Zeros,
}

impl std::str::FromStr for WeightInit {
    type Err = AcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(WeightInit::Identity),
            "xavier" => Ok(WeightInit::Xavier),
            "zeros" => Ok(WeightInit::Zeros),
            other => Err(AcplError::Config(format!("unknown weight init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = AcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(AcplError::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub task_kind: TaskKind,
    pub activation: Activation,
    pub ema_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub stage_epochs: usize,
    pub seed: u64,
    pub weight_init: WeightInit,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            batch_size: 32,
            warmup_epochs: 60,
            stage_epochs: 20,
            seed: 0,
            weight_init: WeightInit::Xavier,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AcplError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(AcplError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// All trainable parameters, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `feature_dim x input_dim`
    pub extractor_weight: Vec<f64>,
    pub extractor_bias: Vec<f64>,
    /// `num_classes x feature_dim`
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            extractor_weight: vec![0.0; arch.feature_dim * arch.input_dim],
            extractor_bias: vec![0.0; arch.feature_dim],
            head_weight: vec![0.0; arch.num_classes * arch.feature_dim],
            head_bias: vec![0.0; arch.num_classes],
        }
    }

    fn arrays(&self) -> [&Vec<f64>; 4] {
        [
            &self.extractor_weight,
            &self.extractor_bias,
            &self.head_weight,
            &self.head_bias,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.extractor_weight,
            &mut self.extractor_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ]
    }

    pub fn len(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.arrays().iter().flat_map(|a| a.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length mismatch");
        let mut offset = 0;
        for a in self.arrays_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    fn zip_apply(&mut self, other: &Params, mut f: impl FnMut(&mut f64, f64)) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                f(d, *s);
            }
        }
    }
}

/// One weighted training example. Targets may be hard or soft.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub target: &'a [f64],
    pub weight: f64,
}

struct Forward {
    hidden_pre: Vec<f64>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross-entropy of a (possibly soft) target against the logits.
///
/// Multiclass: `-Σ t_j log softmax(z)_j`. Multilabel: per-class binary
/// cross-entropy averaged over classes.
pub fn cross_entropy(kind: TaskKind, logits: &[f64], target: &[f64]) -> f64 {
    match kind {
        TaskKind::Multiclass => {
            let lse = log_sum_exp(logits);
            logits
                .iter()
                .zip(target)
                .filter(|(_, t)| **t != 0.0)
                .map(|(z, t)| -t * (z - lse))
                .sum()
        }
        TaskKind::Multilabel => {
            let c = logits.len() as f64;
            logits
                .iter()
                .zip(target)
                .map(|(z, t)| softplus(*z) - t * z)
                .sum::<f64>()
                / c
        }
    }
}

/// Same loss evaluated on a probability vector, `-Σ t log p` style.
pub fn cross_entropy_from_probs(kind: TaskKind, probs: &[f64], target: &[f64]) -> f64 {
    let log = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    match kind {
        TaskKind::Multiclass => probs
            .iter()
            .zip(target)
            .filter(|(_, t)| **t != 0.0)
            .map(|(p, t)| -t * log(*p))
            .sum(),
        TaskKind::Multilabel => {
            let terms: f64 = probs
                .iter()
                .zip(target)
                .map(|(p, t)| {
                    let pos = if *t != 0.0 { -t * log(*p) } else { 0.0 };
                    let neg = if *t != 1.0 { -(1.0 - t) * log(1.0 - p) } else { 0.0 };
                    pos + neg
                })
                .sum();
            terms / probs.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Params,
    v: Params,
    t: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseLearner {
    arch: Architecture,
    params: Params,
    shadow: Params,
    steps: u64,
}

impl BaseLearner {
    pub fn new(arch: Architecture, init: WeightInit, seed: u64) -> Result<Self> {
        if arch.input_dim == 0 || arch.feature_dim == 0 || arch.num_classes == 0 {
            return Err(AcplError::Config(
                "input_dim, feature_dim and num_classes must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&arch.ema_decay) {
            return Err(AcplError::Config(format!(
                "ema_decay must lie in [0, 1], got {}",
                arch.ema_decay
            )));
        }
        let mut params = Params::zeros(&arch);
        match init {
            WeightInit::Zeros => {}
            WeightInit::Identity => {
                if arch.feature_dim != arch.input_dim {
                    return Err(AcplError::Config(format!(
                        "identity init needs feature_dim == input_dim ({} != {})",
                        arch.feature_dim, arch.input_dim
                    )));
                }
                for i in 0..arch.input_dim {
                    params.extractor_weight[i * arch.input_dim + i] = 1.0;
                }
            }
            WeightInit::Xavier => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in w.iter_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                };
                fill(
                    &mut params.extractor_weight,
                    arch.input_dim,
                    arch.feature_dim,
                );
                fill(&mut params.head_weight, arch.feature_dim, arch.num_classes);
            }
        }
        Ok(Self::from_params(arch, params))
    }

    pub fn from_params(arch: Architecture, params: Params) -> Self {
        assert_eq!(
            params.len(),
            Params::zeros(&arch).len(),
            "parameter shape does not match architecture"
        );
        Self {
            arch,
            shadow: params.clone(),
            params,
            steps: 0,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn shadow(&self) -> &Params {
        &self.shadow
    }

    /// Number of optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(AcplError::Shape {
                expected: self.arch.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, params: &Params, x: &[f64]) -> Forward {
        let (d, f, c) = (
            self.arch.input_dim,
            self.arch.feature_dim,
            self.arch.num_classes,
        );
        let hidden_pre: Vec<f64> = (0..f)
            .map(|i| {
                let row = &params.extractor_weight[i * d..(i + 1) * d];
                params.extractor_bias[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let features: Vec<f64> = hidden_pre
            .iter()
            .map(|h| self.arch.activation.apply(*h))
            .collect();
        let logits = (0..c)
            .map(|j| {
                let row = &params.head_weight[j * f..(j + 1) * f];
                params.head_bias[j] + row.iter().zip(&features).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Forward {
            hidden_pre,
            features,
            logits,
        }
    }

    fn activate(&self, logits: &[f64]) -> Vec<f64> {
        match self.arch.task_kind {
            TaskKind::Multiclass => softmax(logits),
            TaskKind::Multilabel => logits.iter().map(|z| sigmoid(*z)).collect(),
        }
    }

    /// Class probabilities, from the EMA shadow when `use_ema` is set.
    pub fn predict(&self, x: &[f64], use_ema: bool) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let params = if use_ema { &self.shadow } else { &self.params };
        Ok(self.activate(&self.forward(params, x).logits))
    }

    /// Penultimate representation from the current (non-EMA) parameters.
    pub fn extract_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(&self.params, x).features)
    }

    pub fn predict_batch(&self, xs: &[&[f64]], use_ema: bool) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.predict(x, use_ema)).collect()
    }

    pub fn extract_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.extract_features(x)).collect()
    }

    /// Weighted loss `Σ w_i ℓ(t_i, p(x_i))` and its gradient at the current parameters.
    pub fn loss_and_gradient(&self, batch: &[Example<'_>]) -> Result<(f64, Params)> {
        self.loss_and_gradient_at(&self.params, batch)
    }

    fn loss_and_gradient_at(&self, params: &Params, batch: &[Example<'_>]) -> Result<(f64, Params)> {
        let (d, f, c) = (
            self.arch.input_dim,
            self.arch.feature_dim,
            self.arch.num_classes,
        );
        let mut grad = Params::zeros(&self.arch);
        let mut loss = 0.0;
        for ex in batch {
            self.check_dim(ex.features)?;
            if ex.target.len() != c {
                return Err(AcplError::Shape {
                    expected: c,
                    actual: ex.target.len(),
                });
            }
            let fw = self.forward(params, ex.features);
            loss += ex.weight * cross_entropy(self.arch.task_kind, &fw.logits, ex.target);

            let probs = self.activate(&fw.logits);
            let dz: Vec<f64> = match self.arch.task_kind {
                TaskKind::Multiclass => {
                    let mass: f64 = ex.target.iter().sum();
                    probs
                        .iter()
                        .zip(ex.target)
                        .map(|(p, t)| ex.weight * (p * mass - t))
                        .collect()
                }
                TaskKind::Multilabel => probs
                    .iter()
                    .zip(ex.target)
                    .map(|(p, t)| ex.weight * (p - t) / c as f64)
                    .collect(),
            };
            let mut dfeat = vec![0.0; f];
            for j in 0..c {
                grad.head_bias[j] += dz[j];
                let row = j * f;
                for i in 0..f {
                    grad.head_weight[row + i] += dz[j] * fw.features[i];
                    dfeat[i] += dz[j] * params.head_weight[row + i];
                }
            }
            for i in 0..f {
                let dh = dfeat[i]
                    * self
                        .arch
                        .activation
                        .derivative(fw.hidden_pre[i], fw.features[i]);
                grad.extractor_bias[i] += dh;
                let row = i * d;
                for k in 0..d {
                    grad.extractor_weight[row + k] += dh * ex.features[k];
                }
            }
        }
        Ok((loss, grad))
    }

    /// Joint objective: mean loss over D_L plus mean loss over D_S (dropped when D_S is empty).
    pub fn joint_loss(&self, labelled: &[LabelledEntry], pseudo: &[LabelledEntry]) -> Result<f64> {
        let examples = joint_examples(labelled, pseudo);
        Ok(self.loss_and_gradient_at(&self.params, &examples)?.0)
    }

    /// `shadow ← decay·shadow + (1−decay)·θ`
    pub fn update_ema(&mut self) {
        let decay = self.arch.ema_decay;
        self.shadow
            .zip_apply(&self.params, |s, p| *s = decay * *s + (1.0 - decay) * p);
    }

    pub fn reset_ema(&mut self) {
        self.shadow = self.params.clone();
    }

    /// Run `epochs` passes of mini-batch descent over `examples`.
    ///
    /// Each batch gradient is scaled by the number of batches in the epoch, so
    /// with weights summing to the objective one epoch moves as far as one
    /// full-gradient step of size `learning_rate`. Returns the full objective
    /// after every epoch.
    pub fn fit(
        &mut self,
        examples: &[Example<'_>],
        epochs: usize,
        cfg: &TrainConfig,
        track_ema: bool,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if examples.is_empty() || epochs == 0 {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ self.steps.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let num_batches = examples.len().div_ceil(cfg.batch_size);
        let mut adam = match cfg.optimizer {
            OptimizerKind::Adam => Some(AdamState {
                m: Params::zeros(&self.arch),
                v: Params::zeros(&self.arch),
                t: 0,
            }),
            OptimizerKind::Sgd => None,
        };
        let mut history = Vec::with_capacity(epochs);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| examples[i]));
                let (_, grad) = self.loss_and_gradient_at(&self.params, &batch)?;
                self.apply_step(&grad, num_batches as f64, cfg.learning_rate, adam.as_mut());
                self.steps += 1;
                if track_ema {
                    self.update_ema();
                }
            }
            let loss = self.loss_and_gradient_at(&self.params, examples)?.0;
            if !loss.is_finite() {
                return Err(AcplError::Training(format!("loss diverged to {loss}")));
            }
            history.push(loss);
        }
        Ok(history)
    }

    fn apply_step(&mut self, grad: &Params, scale: f64, lr: f64, adam: Option<&mut AdamState>) {
        match adam {
            None => self.params.zip_apply(grad, |p, g| *p -= lr * scale * g),
            Some(state) => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                state.t += 1;
                let c1 = 1.0 - B1.powi(state.t);
                let c2 = 1.0 - B2.powi(state.t);
                state.m.zip_apply(grad, |m, g| *m = B1 * *m + (1.0 - B1) * g * scale);
                state
                    .v
                    .zip_apply(grad, |v, g| *v = B2 * *v + (1.0 - B2) * (g * scale).powi(2));
                let m = state.m.to_flat();
                let v = state.v.to_flat();
                let mut flat = self.params.to_flat();
                for ((p, m), v) in flat.iter_mut().zip(m).zip(v) {
                    *p -= lr * (m / c1) / ((v / c2).sqrt() + EPS);
                }
                self.params.set_flat(&flat);
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| AcplError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| AcplError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Binary checkpoint: header, then named arrays with shapes, little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dim in [a.input_dim, a.feature_dim, a.num_classes] {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.push(match a.task_kind {
            TaskKind::Multiclass => 0,
            TaskKind::Multilabel => 1,
        });
        out.push(a.activation.code());
        out.extend_from_slice(&a.ema_decay.to_le_bytes());
        out.extend_from_slice(&self.steps.to_le_bytes());
        let shapes = self.array_shapes();
        let named = [("params", &self.params), ("ema", &self.shadow)];
        out.extend_from_slice(&((named.len() * 4) as u32).to_le_bytes());
        for (prefix, params) in named {
            for ((name, shape), data) in shapes.iter().zip(params.arrays()) {
                let full = format!("{prefix}.{name}");
                out.extend_from_slice(&(full.len() as u32).to_le_bytes());
                out.extend_from_slice(full.as_bytes());
                out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
                for d in shape {
                    out.extend_from_slice(&(*d as u64).to_le_bytes());
                }
                for v in data.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    fn array_shapes(&self) -> [(&'static str, Vec<usize>); 4] {
        let a = &self.arch;
        [
            ("extractor.weight", vec![a.feature_dim, a.input_dim]),
            ("extractor.bias", vec![a.feature_dim]),
            ("head.weight", vec![a.num_classes, a.feature_dim]),
            ("head.bias", vec![a.num_classes]),
        ]
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(AcplError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(AcplError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let input_dim = r.u64()? as usize;
        let feature_dim = r.u64()? as usize;
        let num_classes = r.u64()? as usize;
        let task_kind = match r.u8()? {
            0 => TaskKind::Multiclass,
            1 => TaskKind::Multilabel,
            other => return Err(AcplError::Checkpoint(format!("unknown task kind {other}"))),
        };
        let activation = Activation::from_code(r.u8()?)?;
        let ema_decay = r.f64()?;
        let steps = r.u64()?;
        let arch = Architecture {
            input_dim,
            feature_dim,
            num_classes,
            task_kind,
            activation,
            ema_decay,
        };
        let mut learner = Self::from_params(arch, Params::zeros(&arch));
        learner.steps = steps;
        let count = r.u32()? as usize;
        if count != 8 {
            return Err(AcplError::Checkpoint(format!("expected 8 arrays, found {count}")));
        }
        let shapes = learner.array_shapes();
        for prefix in ["params", "ema"] {
            let mut target = Params::zeros(&arch);
            for ((name, shape), dst) in shapes.iter().zip(target.arrays_mut()) {
                let len = r.u32()? as usize;
                let got = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| AcplError::Checkpoint("array name is not UTF-8".into()))?;
                let expected = format!("{prefix}.{name}");
                if got != expected {
                    return Err(AcplError::Checkpoint(format!(
                        "expected array `{expected}`, found `{got}`"
                    )));
                }
                let ndims = r.u32()? as usize;
                let dims = (0..ndims)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<Result<Vec<_>>>()?;
                if &dims != shape {
                    return Err(AcplError::Checkpoint(format!(
                        "array `{expected}` has shape {dims:?}, expected {shape:?}"
                    )));
                }
                for v in dst.iter_mut() {
                    *v = r.f64()?;
                }
            }
            match prefix {
                "params" => learner.params = target,
                _ => learner.shadow = target,
            }
        }
        if r.pos != bytes.len() {
            return Err(AcplError::Checkpoint("trailing bytes".into()));
        }
        Ok(learner)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ACPLCKPT";
const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| AcplError::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Examples for the joint objective: weight `1/|D_L|` on labelled entries and
/// `1/|D_S|` on pseudo-labelled ones, so the weighted sum is the objective.
pub fn joint_examples<'a>(
    labelled: &'a [LabelledEntry],
    pseudo: &'a [LabelledEntry],
) -> Vec<Example<'a>> {
    let wl = 1.0 / labelled.len().max(1) as f64;
    let ws = 1.0 / pseudo.len().max(1) as f64;
    labelled
        .iter()
        .map(|e| Example {
            features: &e.features,
            target: e.label.values(),
            weight: wl,
        })
        .chain(pseudo.iter().map(|e| Example {
            features: &e.features,
            target: e.label.values(),
            weight: ws,
        }))
        .collect()
}

/// Supervised warm-up on D_L alone. The EMA shadow is set to the final parameters.
pub fn warmup_train(learner: &mut BaseLearner, pools: &DataPools, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if pools.labelled().is_empty() {
        return Err(AcplError::Training("labelled set is empty".into()));
    }
    if !pools.pseudo().is_empty() {
        return Err(AcplError::Training(
            "warm-up expects an empty pseudo-labelled set".into(),
        ));
    }
    let examples = joint_examples(pools.labelled(), &[]);
    let history = learner.fit(&examples, cfg.warmup_epochs, cfg, false)?;
    learner.reset_ema();
    Ok(history)
}

/// One training stage on the joint objective over D_L and D_S, updating the
/// EMA shadow after every optimizer step.
pub fn train_stage(learner: &mut BaseLearner, pools: &DataPools, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if pools.labelled().is_empty() {
        return Err(AcplError::Training("labelled set is empty".into()));
    }
    let examples = joint_examples(pools.labelled(), pools.pseudo());
    learner.fit(&examples, cfg.stage_epochs, cfg, true)
}
