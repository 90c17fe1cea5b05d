//! One JSON manifest per run: solver tag, config echo, seeds, file paths,
//! wall time and final metrics. Wall-time fields are the only part excluded
//! from reproducibility comparisons.

use crate::array::atomic_write;
use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub solver: String,
    /// Full configuration echo, solver-specific.
    pub config: serde_json::Value,
    pub rng_seed: u64,
    /// Input and output paths keyed by role ("measurement", "recovery", ...).
    pub paths: BTreeMap<String, String>,
    pub wall_ms: f64,
    /// Final metrics keyed by name ("loss", "fourier_residual", ...).
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::Validation(format!("manifest serialization: {e}")))?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    #[cfg(test)]
    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}
