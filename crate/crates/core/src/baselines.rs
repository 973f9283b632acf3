//! Comparators: supervised training on the labelled pool only, and classic
//! fixed-threshold confidence pseudo-labelling.

use serde::{Deserialize, Serialize};

use crate::data::{harden, DataPools, LabelVector, LabelledEntry, TaskKind};
use crate::error::{AcplError, Result};
use crate::eval::pseudo_label_accuracy;
use crate::model::{train_stage, warmup_train, BaseLearner, TrainConfig};
use crate::trainer::{class_counts, evaluate, AcplOutcome, StageRecord, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPseudoConfig {
    /// Confidence threshold in `[0, 1)`.
    pub threshold: f64,
    pub stages: usize,
    /// Warm-up and per-stage epochs come from here.
    pub train: TrainConfig,
}

impl Default for ThresholdPseudoConfig {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            stages: 5,
            train: TrainConfig::default(),
        }
    }
}

impl ThresholdPseudoConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(AcplError::Config(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Warm-up on D_L only, evaluated through the EMA shadow like every other run.
pub fn run_supervised(
    pools: DataPools,
    mut learner: BaseLearner,
    cfg: &TrainConfig,
    test: &[LabelledEntry],
) -> Result<AcplOutcome> {
    cfg.validate()?;
    let warmup = warmup_train(&mut learner, &pools, cfg)?;
    let metrics = evaluate(&learner, test)?;
    Ok(AcplOutcome {
        learner,
        records: Vec::new(),
        pools,
        stop_reason: StopReason::StageLimit,
        warmup_loss: warmup.last().copied(),
        metrics,
    })
}

/// Multiclass: top probability above the threshold. Multilabel: every class
/// is confidently on or off, i.e. `max(p, 1 - p)` above the threshold.
pub fn is_confident(probs: &[f64], kind: TaskKind, threshold: f64) -> bool {
    match kind {
        TaskKind::Multiclass => probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > threshold,
        TaskKind::Multilabel => probs.iter().all(|p| p.max(1.0 - p) > threshold),
    }
}

pub fn run_threshold_pseudo(
    mut pools: DataPools,
    mut learner: BaseLearner,
    cfg: &ThresholdPseudoConfig,
    test: &[LabelledEntry],
) -> Result<AcplOutcome> {
    cfg.validate()?;
    let kind = pools.task_kind();
    let classes = pools.num_classes();
    let warmup = warmup_train(&mut learner, &pools, &cfg.train)?;
    let mut records = Vec::new();
    let mut stop_reason = StopReason::StageLimit;

    for stage in 1..=cfg.stages {
        if pools.unlabelled().is_empty() {
            stop_reason = StopReason::UnlabelledExhausted;
            break;
        }
        let xs: Vec<&[f64]> = pools.unlabelled().iter().map(|u| u.features.as_slice()).collect();
        let probs = learner.predict_batch(&xs, false)?;
        let mut pseudo = Vec::new();
        let mut truth = Vec::new();
        for (u, p) in pools.unlabelled().iter().zip(&probs) {
            if !is_confident(p, kind, cfg.threshold) {
                continue;
            }
            let values = harden(p, kind)
                .into_iter()
                .map(|on| if on { 1.0 } else { 0.0 })
                .collect();
            let label = LabelVector::hard(values, kind)?;
            if let Some(t) = u.ground_truth() {
                truth.push((label.clone(), t.clone()));
            }
            pseudo.push(LabelledEntry {
                id: u.id,
                features: u.features.clone(),
                label,
            });
        }
        if pseudo.is_empty() {
            stop_reason = StopReason::EmptySelection;
            break;
        }
        let pseudo_count = pseudo.len();
        let pseudo_label_counts = class_counts(pseudo.iter().map(|p| &p.label), classes);
        pools.set_pseudo(pseudo)?;
        let losses = train_stage(&mut learner, &pools, &cfg.train)?;
        pools.migrate();
        pools.check_invariants()?;
        records.push(StageRecord {
            stage,
            labelled: pools.labelled().len(),
            unlabelled: pools.unlabelled().len(),
            pseudo: pseudo_count,
            anchor: pools.anchor().len(),
            anchor_added: 0,
            density_mean: None,
            gmm: None,
            pseudo_label_accuracy: pseudo_label_accuracy(truth.iter().map(|(p, t)| (p, t))),
            pseudo_class_counts: class_counts(truth.iter().map(|(_, t)| t), classes),
            pseudo_label_counts,
            asp: None,
            train_loss: losses.last().copied(),
            test_metrics: evaluate(&learner, test)?,
        });
    }

    let metrics = evaluate(&learner, test)?;
    Ok(AcplOutcome {
        learner,
        records,
        pools,
        stop_reason,
        warmup_loss: warmup.last().copied(),
        metrics,
    })
}
