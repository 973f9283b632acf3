use std::collections::BTreeSet;

use acpl_core::baselines::ThresholdPseudoConfig;
use acpl_core::data::{holdout_split, ClassSpec, Covariance};
use acpl_core::report::write_run_dir;
use acpl_core::trainer::{info_asp_grid, strategy_grid, AblationSetup, Method};
use acpl_core::*;

fn gaussians(counts: &[usize], dim: usize, spread: f64, seed: u64) -> Dataset {
    let classes = counts
        .iter()
        .enumerate()
        .map(|(c, &count)| {
            let mut mean = vec![0.0; dim];
            mean[c % dim] = spread;
            ClassSpec {
                count,
                mean,
                cov: Covariance::Isotropic(1.0),
            }
        })
        .collect();
    let spec = SyntheticSpec {
        task_kind: TaskKind::Multiclass,
        classes,
        co_activation: None,
        first_id: 0,
    };
    generate_synthetic(&spec, seed).unwrap()
}

fn arch(dim: usize, classes: usize) -> Architecture {
    Architecture {
        input_dim: dim,
        feature_dim: 8,
        num_classes: classes,
        task_kind: TaskKind::Multiclass,
        activation: Activation::Tanh,
        ema_decay: 0.99,
    }
}

fn quick() -> AcplConfig {
    AcplConfig {
        stages: 3,
        k: 5,
        train: TrainConfig {
            warmup_epochs: 40,
            stage_epochs: 10,
            ..TrainConfig::default()
        },
        ..AcplConfig::default()
    }
}

#[test]
fn separable_blobs_get_correct_first_stage_labels() {
    let ds = gaussians(&[100, 100], 2, 8.0, 1);
    let (train, test) = holdout_split(&ds, 0.3, 1).unwrap();
    let pools = split_pools(&train, 0.1, true, 2).unwrap();
    let learner = BaseLearner::new(arch(2, 2), WeightInit::Xavier, 2).unwrap();
    let out = run_acpl(pools, learner, &quick(), &test).unwrap();
    let first = &out.records[0];
    assert!(first.pseudo > 0);
    assert_eq!(first.pseudo_label_accuracy, Some(1.0));
    assert!(out.metrics.unwrap().macro_auc.unwrap() > 0.99);
}

#[test]
fn supervised_equals_zero_stage_run() {
    let ds = gaussians(&[80, 40, 20], 4, 2.5, 3);
    let (train, test) = holdout_split(&ds, 0.3, 3).unwrap();
    let pools = split_pools(&train, 0.1, true, 4).unwrap();
    let learner = BaseLearner::new(arch(4, 3), WeightInit::Xavier, 4).unwrap();
    let cfg = AcplConfig {
        stages: 0,
        ..quick()
    };
    let a = run_acpl(pools.clone(), learner.clone(), &cfg, &test).unwrap();
    let b = run_supervised(pools.clone(), learner, &cfg.train, &test).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert!(a.records.is_empty());
    assert_eq!(a.pools, pools);
}

#[test]
fn empty_labelled_set_is_rejected() {
    let pools = DataPools::new(
        Vec::new(),
        vec![UnlabelledEntry::new(0, vec![1.0, 0.0], None)],
        2,
        TaskKind::Multiclass,
        2,
    )
    .unwrap();
    let learner = BaseLearner::new(arch(2, 2), WeightInit::Xavier, 0).unwrap();
    assert!(run_supervised(pools, learner, &TrainConfig::default(), &[]).is_err());
}

#[test]
fn full_label_fraction_stops_without_stages() {
    let ds = gaussians(&[30, 30], 2, 4.0, 5);
    let pools = split_pools(&ds, 1.0, true, 5).unwrap();
    let learner = BaseLearner::new(arch(2, 2), WeightInit::Xavier, 5).unwrap();
    let out = run_acpl(pools, learner, &quick(), &[]).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.stop_reason, StopReason::UnlabelledExhausted);
}

#[test]
fn without_purification_every_pseudo_label_becomes_an_anchor() {
    let ds = gaussians(&[120, 40, 20], 4, 3.0, 6);
    let pools = split_pools(&ds, 0.1, true, 6).unwrap();
    let initial: BTreeSet<u64> = pools.labelled().iter().map(|e| e.id).collect();
    let learner = BaseLearner::new(arch(4, 3), WeightInit::Xavier, 6).unwrap();
    let cfg = AcplConfig {
        asp_enabled: false,
        ..quick()
    };
    let out = run_acpl(pools, learner, &cfg, &[]).unwrap();
    let anchors: BTreeSet<u64> = out.pools.anchor().iter().map(|e| e.id).collect();
    let labelled: BTreeSet<u64> = out.pools.labelled().iter().map(|e| e.id).collect();
    assert!(initial.is_subset(&anchors));
    assert_eq!(anchors, labelled);
    for r in &out.records {
        assert_eq!(r.anchor_added, r.pseudo);
        assert!(r.asp.is_none());
    }
}

#[test]
fn records_are_reproducible() {
    let ds = gaussians(&[90, 30, 15], 4, 2.5, 7);
    let (train, test) = holdout_split(&ds, 0.3, 7).unwrap();
    let run = || {
        let pools = split_pools(&train, 0.1, true, 8).unwrap();
        let learner = BaseLearner::new(arch(4, 3), WeightInit::Xavier, 8).unwrap();
        run_acpl(pools, learner, &quick(), &test).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.learner.to_bytes(), b.learner.to_bytes());
}

#[test]
fn unreachable_threshold_gives_supervised_metrics() {
    let ds = gaussians(&[60, 30, 30], 4, 1.0, 9);
    let (train, test) = holdout_split(&ds, 0.3, 9).unwrap();
    let pools = split_pools(&train, 0.1, true, 9).unwrap();
    let learner = BaseLearner::new(arch(4, 3), WeightInit::Zeros, 9).unwrap();
    let train_cfg = TrainConfig {
        warmup_epochs: 1,
        learning_rate: 0.01,
        weight_init: WeightInit::Zeros,
        ..TrainConfig::default()
    };
    let cfg = ThresholdPseudoConfig {
        threshold: 0.999,
        stages: 3,
        train: train_cfg.clone(),
    };
    let t = run_threshold_pseudo(pools.clone(), learner.clone(), &cfg, &test).unwrap();
    let s = run_supervised(pools, learner, &train_cfg, &test).unwrap();
    assert!(t.records.is_empty());
    assert_eq!(t.stop_reason, StopReason::EmptySelection);
    assert_eq!(t.metrics, s.metrics);
}

#[test]
fn zero_threshold_labels_everything_in_stage_one() {
    let ds = gaussians(&[40, 20], 2, 3.0, 10);
    let pools = split_pools(&ds, 0.1, true, 10).unwrap();
    let unlabelled = pools.unlabelled().len();
    let learner = BaseLearner::new(arch(2, 2), WeightInit::Xavier, 10).unwrap();
    let cfg = ThresholdPseudoConfig {
        threshold: 0.0,
        stages: 2,
        train: quick().train,
    };
    let out = run_threshold_pseudo(pools, learner, &cfg, &[]).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].pseudo, unlabelled);
    assert!(out.pools.unlabelled().is_empty());
    out.pools.check_invariants().unwrap();
}

#[test]
fn threshold_selection_is_more_majority_heavy_than_high_information() {
    let ds = gaussians(&[350, 75, 50, 25], 8, 3.0, 11);
    let pools = split_pools(&ds, 0.05, true, 11).unwrap();
    let learner = BaseLearner::new(arch(8, 4), WeightInit::Xavier, 11).unwrap();
    let acpl = run_acpl(pools.clone(), learner.clone(), &quick(), &[]).unwrap();
    let thresh = run_threshold_pseudo(
        pools,
        learner,
        &ThresholdPseudoConfig {
            threshold: 0.95,
            stages: 1,
            train: quick().train,
        },
        &[],
    )
    .unwrap();
    let majority = |counts: &[usize]| counts[0] as f64 / counts.iter().sum::<usize>() as f64;
    let a = majority(&acpl.records[0].pseudo_class_counts);
    let t = majority(&thresh.records[0].pseudo_class_counts);
    assert!(t > a, "threshold majority share {t} vs high-information {a}");
}

#[test]
fn ablation_tables_have_expected_shape() {
    let ds = gaussians(&[60, 30, 15], 4, 2.5, 12);
    let (train, test) = holdout_split(&ds, 0.3, 12).unwrap();
    let setup = AblationSetup {
        train: &train,
        test: &test,
        labelled_fraction: 0.1,
        stratified: true,
        arch: arch(4, 3),
    };
    let mut base = quick();
    base.stages = 1;
    let rows = run_ablation(&info_asp_grid(&base), &setup, &[1, 2, 3]).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.runs.len() == 3));
    let rows = run_ablation(&strategy_grid(&base), &setup, &[1, 2, 3]).unwrap();
    assert_eq!(rows.len(), 4);
    let csv = trainer::comparison_csv(&rows);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("variant,delta,mean_auc,std_auc,mean_f1,mean_sensitivity"));

    let single = [Variant {
        id: "supervised".into(),
        delta: String::new(),
        method: Method::Supervised(base.train.clone()),
    }];
    let rows = run_ablation(&single, &setup, &[4, 4, 4]).unwrap();
    assert_eq!(rows[0].std_auc, 0.0);
    assert!(run_ablation(&single, &setup, &[1, 2]).is_err());
    assert!(run_ablation(&[], &setup, &[1, 2, 3]).is_err());
}

#[test]
fn run_directory_has_expected_files() {
    let ds = gaussians(&[60, 30], 2, 3.0, 13);
    let (train, test) = holdout_split(&ds, 0.3, 13).unwrap();
    let mut config = ExperimentConfig::default();
    config.acpl = quick();
    let pools = split_pools(&train, 0.1, true, 13).unwrap();
    let learner = BaseLearner::new(config.architecture(2, 2), WeightInit::Xavier, 13).unwrap();
    let out = run_acpl(pools, learner, &config.acpl, &test).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &config, &out).unwrap();
    for f in ["config.json", "config.txt", "stages.jsonl", "metrics.json", "metrics_per_class.csv", "checkpoint.bin", "stage_curve.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let lines = std::fs::read_to_string(dir.path().join("stages.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), out.records.len());
    for r in &out.records {
        let hist = dir.path().join(format!("histograms/stage{}_class_dist.csv", r.stage));
        assert!(hist.is_file());
    }
    let back = BaseLearner::load(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(back.to_bytes(), out.learner.to_bytes());
    let cfg_back = ExperimentConfig::load(&dir.path().join("config.txt")).unwrap();
    assert_eq!(cfg_back, config);
}
