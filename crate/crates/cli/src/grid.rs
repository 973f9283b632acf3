//! Ablation grids: built-in names or a file with one variant per line.
//!
//! ```text
//! # id        overrides
//! baseline    method=supervised
//! high        info_target=high
//! high_noasp  info_target=high asp_enabled=false
//! thresh      method=threshold threshold=0.9
//! ```

use acpl_core::trainer::{components_grid, info_asp_grid, strategy_grid, Method, Variant};
use acpl_core::{AcplError, ExperimentConfig, Result};

pub const BUILT_IN: &[&str] = &["info-asp", "strategies", "components", "baselines"];

pub fn resolve(grid: &str, base: &ExperimentConfig) -> Result<Vec<Variant>> {
    match grid {
        "info-asp" => Ok(info_asp_grid(&base.acpl)),
        "strategies" => Ok(strategy_grid(&base.acpl)),
        "components" => Ok(components_grid(&base.acpl)),
        "baselines" => Ok(vec![
            Variant {
                id: "supervised".into(),
                delta: "method=supervised".into(),
                method: Method::Supervised(base.acpl.train.clone()),
            },
            Variant {
                id: "threshold".into(),
                delta: format!("method=threshold threshold={}", base.threshold),
                method: Method::ThresholdPseudo(base.threshold_config()),
            },
            Variant {
                id: "acpl".into(),
                delta: String::new(),
                method: Method::Acpl(base.acpl.clone()),
            },
        ]),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| AcplError::io(path, e))?;
            parse(&text, base)
        }
    }
}

pub fn parse(text: &str, base: &ExperimentConfig) -> Result<Vec<Variant>> {
    let mut out: Vec<Variant> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().unwrap_or_default().to_string();
        if out.iter().any(|v| v.id == id) {
            return Err(AcplError::Config(format!("duplicate grid variant `{id}`")));
        }
        let mut cfg = base.clone();
        let mut method = "acpl";
        let mut delta = Vec::new();
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                AcplError::Config(format!("grid line {}: expected key=value, got `{part}`", n + 1))
            })?;
            if key == "method" {
                method = match value {
                    "acpl" => "acpl",
                    "supervised" => "supervised",
                    "threshold" => "threshold",
                    other => {
                        return Err(AcplError::Config(format!("unknown grid method `{other}`")))
                    }
                };
            } else {
                cfg.set(key, value)?;
            }
            delta.push(part.to_string());
        }
        cfg.validate()?;
        let method = match method {
            "supervised" => Method::Supervised(cfg.acpl.train.clone()),
            "threshold" => Method::ThresholdPseudo(cfg.threshold_config()),
            _ => Method::Acpl(cfg.acpl),
        };
        out.push(Variant {
            id,
            delta: delta.join(" "),
            method,
        });
    }
    if out.is_empty() {
        return Err(AcplError::Config("grid has no variants".into()));
    }
    Ok(out)
}
