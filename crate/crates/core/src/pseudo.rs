//! Pseudo-label construction. The default mixes the model prediction and the
//! KNN prediction with the (clamped) density score as the mixing weight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, SampleId};
use crate::error::{AcplError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PseudoStrategy {
    /// `d̂·y_model + (1−d̂)·y_knn` with `d̂ = clamp(d, 0, 1)`.
    InformativeMixup,
    ModelOnly,
    KnnOnly,
    /// The mixing weight is drawn from `Beta(a, b)` instead of the density.
    RandomAlpha { a: f64, b: f64, seed: u64 },
}

impl PseudoStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PseudoStrategy::InformativeMixup => "informative_mixup",
            PseudoStrategy::ModelOnly => "model_only",
            PseudoStrategy::KnnOnly => "knn_only",
            PseudoStrategy::RandomAlpha { .. } => "random_alpha",
        }
    }

    /// Weight placed on the model prediction for a sample with density `d`.
    pub fn mixing_weight(&self, sample_id: SampleId, d: f64) -> Result<f64> {
        if !d.is_finite() {
            return Err(AcplError::Training(format!("non-finite density score {d}")));
        }
        match *self {
            PseudoStrategy::InformativeMixup => Ok(d.clamp(0.0, 1.0)),
            PseudoStrategy::ModelOnly => Ok(1.0),
            PseudoStrategy::KnnOnly => Ok(0.0),
            PseudoStrategy::RandomAlpha { a, b, seed } => {
                let beta = Beta::new(a, b).map_err(|e| {
                    AcplError::Config(format!("invalid beta parameters ({a}, {b}): {e}"))
                })?;
                // One stream per sample so draws do not depend on visiting order.
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ sample_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                Ok(beta.sample(&mut rng))
            }
        }
    }
}

impl std::str::FromStr for PseudoStrategy {
    type Err = AcplError;

    /// Parses the strategy name; `random_alpha` defaults to `Beta(1, 1)`, seed 0.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "informative_mixup" => Ok(PseudoStrategy::InformativeMixup),
            "model_only" => Ok(PseudoStrategy::ModelOnly),
            "knn_only" => Ok(PseudoStrategy::KnnOnly),
            "random_alpha" => Ok(PseudoStrategy::RandomAlpha {
                a: 1.0,
                b: 1.0,
                seed: 0,
            }),
            other => Err(AcplError::Config(format!("unknown pseudo strategy `{other}`"))),
        }
    }
}

/// Convex combination `w·model + (1−w)·knn`, exact at `w ∈ {0, 1}` and kept
/// inside the per-entry interval spanned by the two inputs.
pub fn mix(y_model: &[f64], y_knn: &[f64], w: f64) -> Vec<f64> {
    if w == 1.0 {
        return y_model.to_vec();
    }
    if w == 0.0 {
        return y_knn.to_vec();
    }
    y_model
        .iter()
        .zip(y_knn)
        .map(|(&m, &k)| (w * m + (1.0 - w) * k).clamp(m.min(k), m.max(k)))
        .collect()
}

pub fn make_pseudo_label(
    strategy: &PseudoStrategy,
    sample_id: SampleId,
    y_model: &[f64],
    y_knn: &LabelVector,
    d: f64,
) -> Result<LabelVector> {
    if y_model.len() != y_knn.num_classes() {
        return Err(AcplError::Shape {
            expected: y_knn.num_classes(),
            actual: y_model.len(),
        });
    }
    let w = strategy.mixing_weight(sample_id, d)?;
    let values: Vec<f64> = mix(y_model, y_knn.values(), w)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    LabelVector::soft(values, y_knn.kind())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;

    fn knn(v: &[f64]) -> LabelVector {
        LabelVector::soft(v.to_vec(), TaskKind::Multiclass).unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let m = [0.9, 0.1];
        let k = knn(&[0.5, 0.5]);
        let s = PseudoStrategy::InformativeMixup;
        assert_eq!(make_pseudo_label(&s, 0, &m, &k, 1.0).unwrap().values(), &m);
        assert_eq!(make_pseudo_label(&s, 0, &m, &k, 0.0).unwrap().values(), k.values());
    }

    #[test]
    fn arithmetic_example() {
        let out = make_pseudo_label(
            &PseudoStrategy::InformativeMixup,
            0,
            &[0.9, 0.1],
            &knn(&[0.5, 0.5]),
            0.6,
        )
        .unwrap();
        assert!((out.values()[0] - 0.74).abs() < 1e-12);
        assert!((out.values()[1] - 0.26).abs() < 1e-12);
    }

    #[test]
    fn negative_density_clamps_to_knn() {
        let k = knn(&[0.2, 0.8]);
        let out = make_pseudo_label(&PseudoStrategy::InformativeMixup, 0, &[0.9, 0.1], &k, -0.3).unwrap();
        assert_eq!(out.values(), k.values());
    }

    #[test]
    fn single_prediction_strategies() {
        let m = [0.7, 0.3];
        let k = knn(&[0.1, 0.9]);
        assert_eq!(
            make_pseudo_label(&PseudoStrategy::ModelOnly, 3, &m, &k, 0.2).unwrap().values(),
            &m
        );
        assert_eq!(
            make_pseudo_label(&PseudoStrategy::KnnOnly, 3, &m, &k, 0.9).unwrap().values(),
            k.values()
        );
    }

    #[test]
    fn random_alpha_is_seeded_per_sample() {
        let s = PseudoStrategy::RandomAlpha {
            a: 1.0,
            b: 1.0,
            seed: 42,
        };
        let w1 = s.mixing_weight(7, 0.5).unwrap();
        assert_eq!(w1, s.mixing_weight(7, 0.9).unwrap());
        assert_ne!(w1, s.mixing_weight(8, 0.5).unwrap());
        assert!((0.0..=1.0).contains(&w1));
        let bad = PseudoStrategy::RandomAlpha {
            a: -1.0,
            b: 1.0,
            seed: 0,
        };
        assert!(bad.mixing_weight(0, 0.5).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            make_pseudo_label(&PseudoStrategy::InformativeMixup, 0, &[1.0], &knn(&[0.5, 0.5]), 0.5),
            Err(AcplError::Shape { .. })
        ));
    }

    #[test]
    fn parse_names() {
        for name in ["informative_mixup", "model_only", "knn_only", "random_alpha"] {
            assert_eq!(name.parse::<PseudoStrategy>().unwrap().name(), name);
        }
        assert!("mixup".parse::<PseudoStrategy>().is_err());
    }
}
