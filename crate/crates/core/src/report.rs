//! Run directory output.
//!
//! ```text
//! <out>/config.json              resolved configuration
//! <out>/config.txt               the same, as a key-value config file
//! <out>/stages.jsonl             one stage record per line
//! <out>/stage_curve.csv          pool sizes and test AUC per stage
//! <out>/metrics.json             final test metrics
//! <out>/metrics_per_class.csv
//! <out>/checkpoint.bin           final learner (EMA shadow included)
//! <out>/stop_reason.json         ablation runs only, in place of the two config files and checkpoint
//! <out>/histograms/stage{t}_class_dist.csv
//! ```

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{AcplError, Result};
use crate::eval::MetricReport;
use crate::trainer::{AcplOutcome, SeedRun, StageRecord};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| AcplError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

pub fn stages_jsonl(records: &[StageRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// `class,count,percent` rows for one stage's pseudo-labelled set, by hidden truth.
pub fn class_histogram_csv(record: &StageRecord) -> String {
    let total: usize = record.pseudo_class_counts.iter().sum();
    let mut out = String::from("class,count,percent\n");
    for (c, n) in record.pseudo_class_counts.iter().enumerate() {
        let pct = if total == 0 {
            0.0
        } else {
            100.0 * *n as f64 / total as f64
        };
        out.push_str(&format!("{c},{n},{pct}\n"));
    }
    out
}

pub fn stage_curve_csv(records: &[StageRecord]) -> String {
    let mut out =
        String::from("stage,labelled,unlabelled,pseudo,anchor,pseudo_label_accuracy,macro_auc\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.stage,
            r.labelled,
            r.unlabelled,
            r.pseudo,
            r.anchor,
            opt(r.pseudo_label_accuracy),
            opt(r.test_metrics.as_ref().and_then(|m| m.macro_auc)),
        ));
    }
    out
}

fn write_records(dir: &Path, records: &[StageRecord], metrics: Option<&MetricReport>) -> Result<()> {
    let hist = dir.join("histograms");
    fs::create_dir_all(&hist).map_err(|e| AcplError::io(&hist, e))?;
    write(&dir.join("stages.jsonl"), stages_jsonl(records)?)?;
    write(&dir.join("stage_curve.csv"), stage_curve_csv(records))?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    if let Some(m) = metrics {
        write(&dir.join("metrics_per_class.csv"), m.per_class_csv())?;
    }
    for r in records {
        write(
            &hist.join(format!("stage{}_class_dist.csv", r.stage)),
            class_histogram_csv(r),
        )?;
    }
    Ok(())
}

/// Write every run artefact into `dir`, creating it if needed.
pub fn write_run_dir(dir: &Path, config: &ExperimentConfig, outcome: &AcplOutcome) -> Result<()> {
    write_records(dir, &outcome.records, outcome.metrics.as_ref())?;
    write_json(&dir.join("config.json"), config)?;
    write(&dir.join("config.txt"), config.to_kv())?;
    outcome.learner.save(&dir.join("checkpoint.bin"))
}

/// One ablation run: records and metrics, no checkpoint.
pub fn write_seed_run(dir: &Path, run: &SeedRun) -> Result<()> {
    write_records(dir, &run.records, Some(&run.metrics))?;
    write_json(&dir.join("stop_reason.json"), &run.stop_reason)
}
