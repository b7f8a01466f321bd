//! Run manifests: one JSON record per command invocation, written next to
//! the command's primary output. A manifest plus the tool version is enough
//! to reproduce the run bit for bit (timestamps and timing fields aside).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: Value,
    pub seeds: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

/// Collects manifest fields across a command run; call [`start`] before the
/// work and [`write`] after it so the timestamps bracket the run.
#[derive(Debug)]
pub struct ManifestBuilder {
    manifest: RunManifest,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: now(),
                finished_at: String::new(),
                config: Value::Null,
                seeds: serde_json::json!({}),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn config(mut self, config: Value) -> Self {
        self.manifest.config = config;
        self
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.manifest.seeds[name] = Value::from(value);
        self
    }

    pub fn input(mut self, path: impl AsRef<Path>) -> Self {
        self.manifest.inputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, path: impl AsRef<Path>) -> Self {
        self.manifest.outputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.manifest.finished_at = now();
        let mut text =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
