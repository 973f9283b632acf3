use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use acpl_core::report::write_json;
use acpl_core::{AcplError, Result};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to repeat a run; written before any computation starts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputFile>,
    pub output_dir: PathBuf,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seeds: Vec<u64>, inputs: &[&Path], out: &Path) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| AcplError::io(p, e))?;
                Ok(InputFile {
                    path: p.to_path_buf(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seeds,
            inputs,
            output_dir: out.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| AcplError::io(dir, e))?;
        write_json(&dir.join("manifest.json"), self)
    }
}
