//! Classification metrics and pseudo-label diagnostics.

use serde::{Deserialize, Serialize};

use crate::data::{harden, LabelVector, LabelledEntry};
use crate::error::{AcplError, Result};
use crate::model::BaseLearner;

/// Area under the ROC curve via the Mann-Whitney rank statistic with midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(AcplError::Shape {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(AcplError::UndefinedMetric(
            "AUC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied block i..=j shares the average rank.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    /// A zero denominator occurred and the affected metric was set to 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class sensitivity, precision and F1 from hardened membership flags.
pub fn f1_sensitivity_flags(predictions: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<Vec<ClassScores>> {
    if predictions.len() != truth.len() {
        return Err(AcplError::Shape {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    let Some(classes) = truth.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    for row in predictions.iter().chain(truth) {
        if row.len() != classes {
            return Err(AcplError::Shape {
                expected: classes,
                actual: row.len(),
            });
        }
    }
    Ok((0..classes)
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, t) in predictions.iter().zip(truth) {
                match (p[c], t[c]) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let (sensitivity, d1) = ratio(tp, tp + fn_);
            let (precision, d2) = ratio(tp, tp + fp);
            let (f1, d3) = if precision + sensitivity > 0.0 {
                (2.0 * precision * sensitivity / (precision + sensitivity), false)
            } else {
                (0.0, true)
            };
            ClassScores {
                sensitivity,
                precision,
                f1,
                degenerate: d1 || d2 || d3,
            }
        })
        .collect())
}

pub fn f1_sensitivity(predictions: &[LabelVector], truth: &[LabelVector]) -> Result<Vec<ClassScores>> {
    let p: Vec<Vec<bool>> = predictions.iter().map(LabelVector::active).collect();
    let t: Vec<Vec<bool>> = truth.iter().map(LabelVector::active).collect();
    f1_sensitivity_flags(&p, &t)
}

/// Percentage of samples whose label includes each class.
pub fn class_distribution(labels: &[&LabelVector]) -> Result<Vec<f64>> {
    let first = labels
        .first()
        .ok_or_else(|| AcplError::Empty("class distribution of an empty set".into()))?;
    let mut counts = vec![0usize; first.num_classes()];
    for l in labels {
        for (c, on) in l.active().into_iter().enumerate() {
            if on {
                counts[c] += 1;
            }
        }
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|c| 100.0 * c as f64 / n).collect())
}

/// Fraction of pseudo-labels whose hardened form equals the hidden truth on every class.
pub fn pseudo_label_accuracy<'a>(pairs: impl IntoIterator<Item = (&'a LabelVector, &'a LabelVector)>) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (pseudo, truth) in pairs {
        total += 1;
        if pseudo.active() == truth.active() {
            correct += 1;
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Test-set metrics. Macro values are unweighted means over classes; classes
/// with undefined AUC are left out of the macro AUC and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class_auc: Vec<Option<f64>>,
    pub per_class_sensitivity: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_auc: Option<f64>,
    pub macro_sensitivity: f64,
    pub macro_f1: f64,
    pub undefined_auc_classes: Vec<usize>,
    pub degenerate_f1_classes: Vec<usize>,
    pub num_samples: usize,
}

impl MetricReport {
    pub fn from_predictions(probs: &[Vec<f64>], truth: &[LabelVector]) -> Result<Self> {
        if probs.len() != truth.len() {
            return Err(AcplError::Shape {
                expected: truth.len(),
                actual: probs.len(),
            });
        }
        let first = truth
            .first()
            .ok_or_else(|| AcplError::Empty("no samples to evaluate".into()))?;
        let classes = first.num_classes();
        let kind = first.kind();
        let truth_flags: Vec<Vec<bool>> = truth.iter().map(LabelVector::active).collect();
        let pred_flags: Vec<Vec<bool>> = probs.iter().map(|p| harden(p, kind)).collect();
        let scores = f1_sensitivity_flags(&pred_flags, &truth_flags)?;

        let mut per_class_auc = Vec::with_capacity(classes);
        let mut undefined = Vec::new();
        for c in 0..classes {
            let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let l: Vec<bool> = truth_flags.iter().map(|t| t[c]).collect();
            match roc_auc(&s, &l) {
                Ok(v) => per_class_auc.push(Some(v)),
                Err(AcplError::UndefinedMetric(_)) => {
                    undefined.push(c);
                    per_class_auc.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            macro_auc: mean(per_class_auc.iter().flatten().copied()),
            macro_sensitivity: mean(scores.iter().map(|s| s.sensitivity)).unwrap_or(0.0),
            macro_f1: mean(scores.iter().map(|s| s.f1)).unwrap_or(0.0),
            per_class_sensitivity: scores.iter().map(|s| s.sensitivity).collect(),
            per_class_f1: scores.iter().map(|s| s.f1).collect(),
            degenerate_f1_classes: scores
                .iter()
                .enumerate()
                .filter(|(_, s)| s.degenerate)
                .map(|(c, _)| c)
                .collect(),
            per_class_auc,
            undefined_auc_classes: undefined,
            num_samples: probs.len(),
        })
    }

    /// Evaluate a learner (EMA shadow when `use_ema`) on a labelled test set.
    pub fn evaluate(learner: &BaseLearner, test: &[LabelledEntry], use_ema: bool) -> Result<Self> {
        let xs: Vec<&[f64]> = test.iter().map(|e| e.features.as_slice()).collect();
        let probs = learner.predict_batch(&xs, use_ema)?;
        let truth: Vec<LabelVector> = test.iter().map(|e| e.label.clone()).collect();
        Self::from_predictions(&probs, &truth)
    }

    /// `class,auc,sensitivity,f1` rows; undefined AUC is an empty cell.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,auc,sensitivity,f1\n");
        for c in 0..self.per_class_f1.len() {
            let auc = self.per_class_auc[c].map_or(String::new(), |v| v.to_string());
            out.push_str(&format!(
                "{c},{auc},{},{}\n",
                self.per_class_sensitivity[c], self.per_class_f1[c]
            ));
        }
        out
    }
}
