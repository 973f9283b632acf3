//! Anti-curriculum pseudo-labelling for semi-supervised classification of
//! feature vectors.
//!
//! Each training stage scores unlabelled samples by their cosine density
//! relative to an anchor set, fits a small Gaussian mixture to those scores
//! and pseudo-labels the least dense (most informative) ones with a
//! density-weighted mix of model and KNN predictions. A reverse-KNN
//! connectivity test decides which new pseudo-labelled samples join the
//! anchor set.

pub mod asp;
pub mod baselines;
pub mod cdsi;
pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod model;
pub mod pseudo;
pub mod report;
pub mod trainer;

pub use asp::{connectivity_count, purify, ConnectivityReport};
pub use baselines::{run_supervised, run_threshold_pseudo, ThresholdPseudoConfig};
pub use cdsi::{fit_em, EmOptions, GmmComponent, InfoGmm, InfoLevel, Posterior};
pub use config::ExperimentConfig;
pub use data::{
    generate_synthetic, load_csv, load_csv_auto, split_pools, write_csv, DataPools, Dataset, LabelVector,
    LabelledEntry, Sample, SampleId, SyntheticSpec, TaskKind, UnlabelledEntry,
};
pub use density::{build_index, AnchorIndex, CosineIndex};
pub use error::{AcplError, ErrorClass, Result};
pub use eval::{roc_auc, MetricReport};
pub use model::{Activation, Architecture, BaseLearner, OptimizerKind, TrainConfig, WeightInit};
pub use pseudo::{make_pseudo_label, PseudoStrategy};
pub use trainer::{run_ablation, run_acpl, AblationRow, AblationSetup, AcplConfig, AcplOutcome, Method, StageRecord, StopReason, Variant};
