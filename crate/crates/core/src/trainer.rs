//! The staged self-training loop: warm-up, then per stage density scoring,
//! mixture-based selection, pseudo-labelling, anchor purification, joint
//! retraining and pool migration. Also the ablation grid runner.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asp::{purify, ConnectivityReport};
use crate::cdsi::{fit_em, EmOptions, GmmComponent, InfoGmm, InfoLevel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::data::{split_pools, DataPools, Dataset, LabelVector, LabelledEntry, SampleId};
use crate::density::{build_index, AnchorIndex, CosineIndex};
use crate::error::{AcplError, Result};
use crate::eval::{pseudo_label_accuracy, MetricReport};
use crate::model::{train_stage, warmup_train, Architecture, BaseLearner, TrainConfig};
use crate::pseudo::{make_pseudo_label, PseudoStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcplConfig {
    /// Maximum number of pseudo-labelling stages.
    pub stages: usize,
    /// Neighbour count for density scores and KNN labels.
    pub k: usize,
    /// Neighbour count for anchor purification; `k` when absent.
    pub asp_k: Option<usize>,
    pub train: TrainConfig,
    pub pseudo: PseudoStrategy,
    pub info_target: InfoLevel,
    pub asp_enabled: bool,
    pub gmm_components: usize,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub seed: u64,
}

impl Default for AcplConfig {
    fn default() -> Self {
        Self {
            stages: 5,
            k: 10,
            asp_k: None,
            train: TrainConfig::default(),
            pseudo: PseudoStrategy::InformativeMixup,
            info_target: InfoLevel::High,
            asp_enabled: true,
            gmm_components: 3,
            em_tol: DEFAULT_TOL,
            em_max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

impl AcplConfig {
    /// Route one seed into every random stream the configuration drives.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.train.seed = seed;
        if let PseudoStrategy::RandomAlpha { seed: s, .. } = &mut cfg.pseudo {
            *s = seed;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.k == 0 || self.asp_k == Some(0) {
            return Err(AcplError::Config("k must be at least 1".into()));
        }
        if !(2..=4).contains(&self.gmm_components) {
            return Err(AcplError::Config(format!(
                "gmm_components must be 2, 3 or 4, got {}",
                self.gmm_components
            )));
        }
        if !(self.em_tol > 0.0) || self.em_max_iter == 0 {
            return Err(AcplError::Config(
                "em_tol and em_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StageLimit,
    UnlabelledExhausted,
    EmptySelection,
    DegenerateScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub components: Vec<GmmComponent>,
    pub levels: Vec<InfoLevel>,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
}

impl From<&InfoGmm> for GmmSummary {
    fn from(g: &InfoGmm) -> Self {
        Self {
            components: g.components().to_vec(),
            levels: g.levels().to_vec(),
            iterations: g.diagnostics().iterations,
            log_likelihood: g.diagnostics().log_likelihood,
            converged: g.diagnostics().converged,
        }
    }
}

/// Pool sizes and diagnostics after one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub labelled: usize,
    pub unlabelled: usize,
    pub pseudo: usize,
    pub anchor: usize,
    pub anchor_added: usize,
    pub density_mean: Option<f64>,
    pub gmm: Option<GmmSummary>,
    pub pseudo_label_accuracy: Option<f64>,
    /// Class counts of this stage's pseudo-labelled samples by hidden truth.
    pub pseudo_class_counts: Vec<usize>,
    /// Class counts of the hardened pseudo-labels themselves.
    pub pseudo_label_counts: Vec<usize>,
    pub asp: Option<ConnectivityReport>,
    pub train_loss: Option<f64>,
    pub test_metrics: Option<MetricReport>,
}

#[derive(Debug, Clone)]
pub struct AcplOutcome {
    /// Final learner; evaluate it through its EMA shadow.
    pub learner: BaseLearner,
    pub records: Vec<StageRecord>,
    pub pools: DataPools,
    pub stop_reason: StopReason,
    pub warmup_loss: Option<f64>,
    pub metrics: Option<MetricReport>,
}

pub(crate) fn entry_refs(entries: &[LabelledEntry]) -> Vec<&[f64]> {
    entries.iter().map(|e| e.features.as_slice()).collect()
}

pub(crate) fn evaluate(learner: &BaseLearner, test: &[LabelledEntry]) -> Result<Option<MetricReport>> {
    if test.is_empty() {
        return Ok(None);
    }
    MetricReport::evaluate(learner, test, true).map(Some)
}

pub(crate) fn class_counts<'a>(labels: impl IntoIterator<Item = &'a LabelVector>, classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for l in labels {
        for (c, on) in l.active().into_iter().enumerate() {
            if on {
                counts[c] += 1;
            }
        }
    }
    counts
}

fn anchor_index(pools: &DataPools, features: &[Vec<f64>], k: usize) -> Result<AnchorIndex> {
    build_index(
        pools
            .anchor()
            .iter()
            .zip(features)
            .map(|(a, f)| (a.id, f.clone(), a.label.clone()))
            .collect(),
        k,
    )
}

struct Selection {
    gmm: Option<InfoGmm>,
    density_mean: f64,
    ids: BTreeSet<SampleId>,
    degenerate: bool,
}

fn select_candidates(scored: &[(SampleId, f64)], cfg: &AcplConfig) -> Result<Selection> {
    let scores: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
    let density_mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let opts = EmOptions {
        tol: cfg.em_tol,
        max_iter: cfg.em_max_iter,
        num_components: cfg.gmm_components,
        initial: None,
    };
    match fit_em(&scores, &opts) {
        Ok(gmm) => Ok(Selection {
            ids: gmm.select(scored, cfg.info_target),
            gmm: Some(gmm),
            density_mean,
            degenerate: false,
        }),
        // Too few or identical scores: nothing can be ranked this stage.
        Err(AcplError::DegenerateData(_)) | Err(AcplError::Fit(_)) => Ok(Selection {
            gmm: None,
            density_mean,
            ids: BTreeSet::new(),
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Run the full staged algorithm from a fresh split (D_A = D_L, D_S empty).
///
/// Stops after `cfg.stages` stages, when D_U is exhausted, or when a stage
/// selects nothing, whichever comes first.
pub fn run_acpl(
    mut pools: DataPools,
    mut learner: BaseLearner,
    cfg: &AcplConfig,
    test: &[LabelledEntry],
) -> Result<AcplOutcome> {
    cfg.validate()?;
    let classes = pools.num_classes();
    let warmup = warmup_train(&mut learner, &pools, &cfg.train)?;
    let mut records = Vec::new();
    let mut stage = 0;

    let stop_reason = loop {
        if stage >= cfg.stages {
            break StopReason::StageLimit;
        }
        if pools.unlabelled().is_empty() {
            break StopReason::UnlabelledExhausted;
        }

        let anchor_features = learner.extract_batch(&entry_refs(pools.anchor()))?;
        let unlabelled_x: Vec<&[f64]> = pools
            .unlabelled()
            .iter()
            .map(|u| u.features.as_slice())
            .collect();
        let unlabelled_features = learner.extract_batch(&unlabelled_x)?;
        let anchors = anchor_index(&pools, &anchor_features, cfg.k)?;

        let scored_full: Vec<(f64, LabelVector)> = unlabelled_features
            .par_iter()
            .map(|f| anchors.density_and_label(f))
            .collect::<Result<_>>()?;
        let scored: Vec<(SampleId, f64)> = pools
            .unlabelled()
            .iter()
            .zip(&scored_full)
            .map(|(u, (d, _))| (u.id, *d))
            .collect();

        let selection = select_candidates(&scored, cfg)?;
        if selection.ids.is_empty() {
            break if selection.degenerate {
                StopReason::DegenerateScores
            } else {
                StopReason::EmptySelection
            };
        }

        let mut pseudo = Vec::with_capacity(selection.ids.len());
        let mut candidates = Vec::with_capacity(selection.ids.len());
        let mut truth_pairs = Vec::new();
        for (pos, u) in pools.unlabelled().iter().enumerate() {
            if !selection.ids.contains(&u.id) {
                continue;
            }
            let (d, knn) = &scored_full[pos];
            let y_model = learner.predict(&u.features, false)?;
            let label = make_pseudo_label(&cfg.pseudo, u.id, &y_model, knn, *d)?;
            if let Some(truth) = u.ground_truth() {
                truth_pairs.push((label.clone(), truth.clone()));
            }
            candidates.push((u.id, pos));
            pseudo.push(LabelledEntry {
                id: u.id,
                features: u.features.clone(),
                label,
            });
        }

        let (additions, asp_report) = if cfg.asp_enabled {
            let asp_k = cfg.asp_k.unwrap_or(cfg.k);
            let asp_anchors = if asp_k == cfg.k {
                anchors
            } else {
                anchor_index(&pools, &anchor_features, asp_k)?
            };
            let unlabelled_index = CosineIndex::build(
                pools
                    .unlabelled()
                    .iter()
                    .zip(&unlabelled_features)
                    .map(|(u, f)| (u.id, f.clone()))
                    .collect(),
                asp_k,
            )?;
            let cand: Vec<(SampleId, &[f64])> = candidates
                .iter()
                .map(|(id, pos)| (*id, unlabelled_features[*pos].as_slice()))
                .collect();
            let report = purify(&cand, &unlabelled_index, &asp_anchors)?;
            let keep: BTreeSet<SampleId> = report.selected.iter().copied().collect();
            let additions: Vec<LabelledEntry> =
                pseudo.iter().filter(|p| keep.contains(&p.id)).cloned().collect();
            (additions, Some(report))
        } else {
            (pseudo.clone(), None)
        };

        let pseudo_class_counts = class_counts(truth_pairs.iter().map(|(_, t)| t), classes);
        let pseudo_label_counts = class_counts(pseudo.iter().map(|p| &p.label), classes);
        let accuracy = pseudo_label_accuracy(truth_pairs.iter().map(|(p, t)| (p, t)));
        let anchor_added = additions.len();
        let pseudo_count = pseudo.len();

        pools.set_pseudo(pseudo)?;
        pools.extend_anchor(additions)?;
        stage += 1;
        let losses = train_stage(&mut learner, &pools, &cfg.train)?;
        pools.migrate();
        pools.check_invariants()?;

        records.push(StageRecord {
            stage,
            labelled: pools.labelled().len(),
            unlabelled: pools.unlabelled().len(),
            pseudo: pseudo_count,
            anchor: pools.anchor().len(),
            anchor_added,
            density_mean: Some(selection.density_mean),
            gmm: selection.gmm.as_ref().map(GmmSummary::from),
            pseudo_label_accuracy: accuracy,
            pseudo_class_counts,
            pseudo_label_counts,
            asp: asp_report,
            train_loss: losses.last().copied(),
            test_metrics: evaluate(&learner, test)?,
        });
    };

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

/// One column of an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Acpl(AcplConfig),
    Supervised(TrainConfig),
    ThresholdPseudo(crate::baselines::ThresholdPseudoConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub id: String,
    /// Human-readable difference from the base configuration.
    pub delta: String,
    pub method: Method,
}

/// Everything shared by all variants of a grid.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    /// Fully labelled training data, split per seed.
    pub train: &'a Dataset,
    pub test: &'a [LabelledEntry],
    pub labelled_fraction: f64,
    pub stratified: bool,
    pub arch: Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: MetricReport,
    pub records: Vec<StageRecord>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub delta: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_f1: f64,
    pub mean_sensitivity: f64,
    pub runs: Vec<SeedRun>,
}

/// Sample standard deviation (0 for a single value).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    // Shifted by the first value so identical inputs give exactly zero.
    let n = values.len() as f64;
    let shifted: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
    let mean = shifted.iter().sum::<f64>() / n;
    let ss: f64 = shifted.iter().map(|d| (d - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Run one method from a seeded split and a seeded initialisation.
pub fn run_method(method: &Method, setup: &AblationSetup<'_>, seed: u64) -> Result<SeedRun> {
    let pools = split_pools(setup.train, setup.labelled_fraction, setup.stratified, seed)?;
    let init = match method {
        Method::Acpl(c) => c.train.weight_init,
        Method::Supervised(t) => t.weight_init,
        Method::ThresholdPseudo(t) => t.train.weight_init,
    };
    let learner = BaseLearner::new(setup.arch, init, seed)?;
    let outcome = match method {
        Method::Acpl(cfg) => run_acpl(pools, learner, &cfg.with_seed(seed), setup.test)?,
        Method::Supervised(train) => {
            let mut t = train.clone();
            t.seed = seed;
            crate::baselines::run_supervised(pools, learner, &t, setup.test)?
        }
        Method::ThresholdPseudo(cfg) => {
            let mut c = cfg.clone();
            c.train.seed = seed;
            crate::baselines::run_threshold_pseudo(pools, learner, &c, setup.test)?
        }
    };
    let metrics = outcome
        .metrics
        .ok_or_else(|| AcplError::Empty("ablation needs a non-empty test set".into()))?;
    Ok(SeedRun {
        seed,
        metrics,
        records: outcome.records,
        stop_reason: outcome.stop_reason,
    })
}

/// Run every variant on every seed and summarise mean ± std of the test metrics.
///
/// For a given seed all variants start from the same split and the same
/// initial parameters.
pub fn run_ablation(variants: &[Variant], setup: &AblationSetup<'_>, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(AcplError::Config("ablation grid has no variants".into()));
    }
    if seeds.len() < 3 {
        return Err(AcplError::Config(format!(
            "ablation needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |s| (v, *s)))
        .collect();
    let results: Vec<SeedRun> = jobs
        .par_iter()
        .map(|(v, seed)| run_method(&variants[*v].method, setup, *seed))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(variants.len());
    for (v, variant) in variants.iter().enumerate() {
        let runs: Vec<SeedRun> = results[v * seeds.len()..(v + 1) * seeds.len()].to_vec();
        let aucs: Vec<f64> = runs
            .iter()
            .map(|r| r.metrics.macro_auc.unwrap_or(f64::NAN))
            .collect();
        let f1: Vec<f64> = runs.iter().map(|r| r.metrics.macro_f1).collect();
        let sens: Vec<f64> = runs.iter().map(|r| r.metrics.macro_sensitivity).collect();
        rows.push(AblationRow {
            variant: variant.id.clone(),
            delta: variant.delta.clone(),
            mean_auc: mean(&aucs),
            std_auc: std_dev(&aucs),
            mean_f1: mean(&f1),
            mean_sensitivity: mean(&sens),
            runs,
        });
    }
    Ok(rows)
}

/// `variant,delta,mean_auc,std_auc,mean_f1,mean_sensitivity`
pub fn comparison_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,delta,mean_auc,std_auc,mean_f1,mean_sensitivity\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant,
            r.delta.replace(',', ";"),
            r.mean_auc,
            r.std_auc,
            r.mean_f1,
            r.mean_sensitivity
        ));
    }
    out
}

/// Information target × purification on/off.
pub fn info_asp_grid(base: &AcplConfig) -> Vec<Variant> {
    let mut out = Vec::new();
    for target in [InfoLevel::Low, InfoLevel::Medium, InfoLevel::High] {
        for asp in [false, true] {
            let mut cfg = base.clone();
            cfg.info_target = target;
            cfg.asp_enabled = asp;
            out.push(Variant {
                id: format!("{target}_{}", if asp { "asp" } else { "noasp" }),
                delta: format!("info_target={target} asp={asp}"),
                method: Method::Acpl(cfg),
            });
        }
    }
    out
}

/// The four pseudo-labelling strategies.
pub fn strategy_grid(base: &AcplConfig) -> Vec<Variant> {
    [
        PseudoStrategy::ModelOnly,
        PseudoStrategy::KnnOnly,
        PseudoStrategy::RandomAlpha {
            a: 1.0,
            b: 1.0,
            seed: base.seed,
        },
        PseudoStrategy::InformativeMixup,
    ]
    .into_iter()
    .map(|s| {
        let mut cfg = base.clone();
        cfg.pseudo = s;
        Variant {
            id: s.name().to_string(),
            delta: format!("pseudo_strategy={}", s.name()),
            method: Method::Acpl(cfg),
        }
    })
    .collect()
}

/// Mixture size sweep over 2, 3 and 4 components.
pub fn components_grid(base: &AcplConfig) -> Vec<Variant> {
    (2..=4)
        .map(|n| {
            let mut cfg = base.clone();
            cfg.gmm_components = n;
            Variant {
                id: format!("gmm{n}"),
                delta: format!("gmm_components={n}"),
                method: Method::Acpl(cfg),
            }
        })
        .collect()
}
