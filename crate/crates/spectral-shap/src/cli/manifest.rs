//! Run manifests: every command records its resolved parameters, input
//! digests and per-phase wall times. Re-running a command with an identical
//! manifest reproduces the data outputs bitwise (the manifest itself holds
//! the only nondeterministic values, the timings).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub phases: Vec<Phase>,
    #[serde(skip)]
    phase_start: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            inputs: Vec::new(),
            phases: Vec::new(),
            phase_start: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    pub fn start_phase(&mut self, name: &str) {
        self.finish_phase();
        self.phase_start = Some((name.to_string(), Instant::now()));
    }

    pub fn finish_phase(&mut self) {
        if let Some((name, start)) = self.phase_start.take() {
            self.phases.push(Phase {
                name,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn write(&mut self, path: &PathBuf) -> Result<()> {
        self.finish_phase();
        let text = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
