use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::io::write_json;

/// Provenance record written next to every command's output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// SHA-256 of the canonical JSON form of the resolved settings.
    pub config_digest: String,
    pub master_seed: u64,
    pub version: String,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
}

pub fn digest(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Collects warnings while a command runs.
pub struct ManifestBuilder {
    start: Instant,
    command: Vec<String>,
    config_digest: String,
    master_seed: u64,
    threads: usize,
    pub warnings: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: Vec<String>, canonical_config: &str, master_seed: u64, threads: usize) -> Self {
        Self {
            start: Instant::now(),
            command,
            config_digest: digest(canonical_config),
            master_seed,
            threads,
            warnings: Vec::new(),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn finish(self, details: serde_json::Value) -> RunManifest {
        RunManifest {
            command: self.command,
            config_digest: self.config_digest,
            master_seed: self.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: self.threads,
            wall_time_seconds: self.start.elapsed().as_secs_f64(),
            warnings: self.warnings,
            details,
        }
    }

    pub fn write(self, path: &Path, details: serde_json::Value) -> Result<RunManifest, CliError> {
        let m = self.finish(details);
        write_json(path, &m)?;
        Ok(m)
    }
}
