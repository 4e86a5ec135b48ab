use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Outcome;
use crate::{CliError, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one run. Holds nothing that depends on the thread count
/// or the clock, so repeated runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub subcommand: String,
    pub fixture: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub passed: bool,
    pub artifacts: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(subcommand: &str, cfg: &ExperimentConfig, config_bytes: &[u8], outcome: &Outcome) -> Self {
        Manifest {
            subcommand: subcommand.to_string(),
            fixture: cfg.fixture_name(),
            config_sha256: hex::encode(Sha256::digest(config_bytes)),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            passed: outcome.passed,
            artifacts: outcome.artifacts.clone(),
            metrics: outcome.metrics.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Manifest, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|_| CliError::MissingManifest(path.clone()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
