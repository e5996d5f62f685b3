//! Run manifest: a JSON record of what a command did — the resolved
//! configuration, seeds, wall-clock bounds, and every artifact written.
//! A manifest is emitted even when the command fails, with the error
//! summary in place of the result block.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::Resolved;

/// CSV schema identifiers, bumped when a column layout changes.
pub const SCHEMA_PHASE: &str = "phase-ratio/v1";
pub const SCHEMA_CUMULATIVE: &str = "cumulative-ratio/v1";
pub const SCHEMA_TIMING: &str = "timing/v1";
pub const SCHEMA_STEADY: &str = "steady-state/v1";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand name plus the arguments it ran with.
    pub command: String,
    /// Fully resolved configuration (file + flag overrides).
    pub config: Resolved,
    /// Every RNG seed the run consumed.
    pub seeds: Vec<u64>,
    /// Unix timestamps (seconds).
    pub started_at: f64,
    pub finished_at: f64,
    /// Files written by the run, with their CSV schema tags where
    /// applicable.
    pub artifacts: Vec<Artifact>,
    /// Per-command summary numbers (steady-state ratios, final cumulative
    /// ratio, and so on).
    pub summary: Value,
    /// Present iff the command failed.
    pub error: Option<String>,
    /// Crate version that produced the artifacts.
    pub version: String,
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub schema: Option<String>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn begin(command: String, config: Resolved) -> Self {
        RunManifest {
            command,
            config,
            seeds: Vec::new(),
            started_at: now(),
            finished_at: 0.0,
            artifacts: Vec::new(),
            summary: Value::Null,
            error: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn record(&mut self, path: PathBuf, schema: Option<&str>) {
        self.artifacts.push(Artifact {
            path,
            schema: schema.map(str::to_string),
        });
    }

    /// Stamps the end time and writes the manifest next to the other
    /// artifacts. The manifest lists itself so the artifact inventory is
    /// complete.
    pub fn finish(mut self, out_dir: &Path, error: Option<String>) -> std::io::Result<PathBuf> {
        self.error = error;
        self.finished_at = now();
        let path = out_dir.join(format!("manifest-{}.json", self.command_slug()));
        self.record(path.clone(), None);
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, json)?;
        Ok(path)
    }

    fn command_slug(&self) -> String {
        self.command
            .split_whitespace()
            .next()
            .unwrap_or("run")
            .to_string()
    }
}
