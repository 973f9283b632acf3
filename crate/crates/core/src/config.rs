//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! stages = 5
//! k = 10
//! info_target = high
//! ```
//!
//! Unknown keys, duplicate keys and unparsable values are errors naming the key.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::ThresholdPseudoConfig;
use crate::data::TaskKind;
use crate::error::{AcplError, Result};
use crate::model::{Activation, Architecture, DEFAULT_EMA_DECAY};
use crate::pseudo::PseudoStrategy;
use crate::trainer::AcplConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub acpl: AcplConfig,
    pub feature_dim: usize,
    pub activation: Activation,
    pub ema_decay: f64,
    pub task_kind: TaskKind,
    pub labelled_fraction: f64,
    pub stratified: bool,
    /// Stratified holdout used as the test set when no test file is given.
    pub test_fraction: f64,
    /// Confidence threshold of the threshold pseudo-labelling comparator.
    pub threshold: f64,
    /// Beta parameters for the `random_alpha` strategy.
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            acpl: AcplConfig::default(),
            feature_dim: 16,
            activation: Activation::Tanh,
            ema_decay: DEFAULT_EMA_DECAY,
            task_kind: TaskKind::Multiclass,
            labelled_fraction: 0.05,
            stratified: true,
            test_fraction: 0.3,
            threshold: 0.95,
            beta_a: 1.0,
            beta_b: 1.0,
        }
    }
}

/// Every accepted key, in the order `to_kv` writes them.
pub const KEYS: &[&str] = &[
    "stages",
    "k",
    "asp_k",
    "info_target",
    "asp_enabled",
    "gmm_components",
    "em_tol",
    "em_max_iter",
    "pseudo_strategy",
    "beta_a",
    "beta_b",
    "learning_rate",
    "batch_size",
    "warmup_epochs",
    "stage_epochs",
    "weight_init",
    "optimizer",
    "seed",
    "feature_dim",
    "activation",
    "ema_decay",
    "task_kind",
    "labelled_fraction",
    "stratified",
    "test_fraction",
    "threshold",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| AcplError::Config(format!("invalid value `{raw}` for key `{key}`")))
}

fn word<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| {
                AcplError::Config(format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(AcplError::Config(format!("duplicate key `{key}`")));
            }
            cfg.set(key, raw.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AcplError::io(path, e))?;
        Self::parse(&text)
    }

    /// Set one key; used by the file parser and by command-line overrides.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let a = &mut self.acpl;
        match key {
            "stages" => a.stages = value(key, raw)?,
            "k" => a.k = value(key, raw)?,
            "asp_k" => {
                a.asp_k = if raw == "none" || raw.is_empty() {
                    None
                } else {
                    Some(value(key, raw)?)
                }
            }
            "info_target" => a.info_target = value(key, raw)?,
            "asp_enabled" => a.asp_enabled = value(key, raw)?,
            "gmm_components" => a.gmm_components = value(key, raw)?,
            "em_tol" => a.em_tol = value(key, raw)?,
            "em_max_iter" => a.em_max_iter = value(key, raw)?,
            "pseudo_strategy" => {
                a.pseudo = value(key, raw)?;
                self.sync_beta();
            }
            "beta_a" => {
                self.beta_a = value(key, raw)?;
                self.sync_beta();
            }
            "beta_b" => {
                self.beta_b = value(key, raw)?;
                self.sync_beta();
            }
            "learning_rate" => a.train.learning_rate = value(key, raw)?,
            "batch_size" => a.train.batch_size = value(key, raw)?,
            "warmup_epochs" => a.train.warmup_epochs = value(key, raw)?,
            "stage_epochs" => a.train.stage_epochs = value(key, raw)?,
            "weight_init" => a.train.weight_init = value(key, raw)?,
            "optimizer" => a.train.optimizer = value(key, raw)?,
            "seed" => {
                let s: u64 = value(key, raw)?;
                *a = a.with_seed(s);
            }
            "feature_dim" => self.feature_dim = value(key, raw)?,
            "activation" => self.activation = value(key, raw)?,
            "ema_decay" => self.ema_decay = value(key, raw)?,
            "task_kind" => self.task_kind = value(key, raw)?,
            "labelled_fraction" => self.labelled_fraction = value(key, raw)?,
            "stratified" => self.stratified = value(key, raw)?,
            "test_fraction" => self.test_fraction = value(key, raw)?,
            "threshold" => self.threshold = value(key, raw)?,
            other => return Err(AcplError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn sync_beta(&mut self) {
        if let PseudoStrategy::RandomAlpha { a, b, .. } = &mut self.acpl.pseudo {
            *a = self.beta_a;
            *b = self.beta_b;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.acpl.validate()?;
        if self.feature_dim == 0 {
            return Err(AcplError::Config("feature_dim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(AcplError::Config(format!(
                "ema_decay must lie in [0, 1], got {}",
                self.ema_decay
            )));
        }
        if !(self.labelled_fraction > 0.0 && self.labelled_fraction <= 1.0) {
            return Err(AcplError::Config(format!(
                "labelled_fraction must lie in (0, 1], got {}",
                self.labelled_fraction
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(AcplError::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        self.threshold_config().validate()
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_dim,
            feature_dim: self.feature_dim,
            num_classes,
            task_kind: self.task_kind,
            activation: self.activation,
            ema_decay: self.ema_decay,
        }
    }

    pub fn threshold_config(&self) -> ThresholdPseudoConfig {
        ThresholdPseudoConfig {
            threshold: self.threshold,
            stages: self.acpl.stages,
            train: self.acpl.train.clone(),
        }
    }

    /// Render as a config file that parses back to `self`.
    pub fn to_kv(&self) -> String {
        let a = &self.acpl;
        let t = &a.train;
        let values: Vec<String> = vec![
            a.stages.to_string(),
            a.k.to_string(),
            a.asp_k.map_or("none".to_string(), |k| k.to_string()),
            a.info_target.to_string(),
            a.asp_enabled.to_string(),
            a.gmm_components.to_string(),
            a.em_tol.to_string(),
            a.em_max_iter.to_string(),
            a.pseudo.name().to_string(),
            self.beta_a.to_string(),
            self.beta_b.to_string(),
            t.learning_rate.to_string(),
            t.batch_size.to_string(),
            t.warmup_epochs.to_string(),
            t.stage_epochs.to_string(),
            word(&t.weight_init),
            word(&t.optimizer),
            a.seed.to_string(),
            self.feature_dim.to_string(),
            word(&self.activation),
            self.ema_decay.to_string(),
            word(&self.task_kind),
            self.labelled_fraction.to_string(),
            self.stratified.to_string(),
            self.test_fraction.to_string(),
            self.threshold.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
