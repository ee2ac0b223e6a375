//! Output-file plumbing: atomic writes and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::CliError;

/// Write via a temp file in the same directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Everything needed to reproduce a run: resolved config, seeds, artifact
/// paths, timings, and the tool version. Written last, atomically.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub tool_version: &'static str,
    pub command: &'a str,
    pub config: &'a PipelineConfig,
    pub seeds: Vec<(String, u64)>,
    pub artifacts: Vec<PathBuf>,
    pub timing_seconds: f64,
}

pub struct ManifestBuilder<'a> {
    command: &'a str,
    config: &'a PipelineConfig,
    seeds: Vec<(String, u64)>,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl<'a> ManifestBuilder<'a> {
    pub fn new(command: &'a str, config: &'a PipelineConfig) -> Self {
        ManifestBuilder {
            command,
            config,
            seeds: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.push((name.to_string(), value));
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    pub fn write(self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            artifacts: self.artifacts,
            timing_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join("manifest.json");
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(path)
    }
}
