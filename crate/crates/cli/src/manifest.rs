use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::inputs::DataRecord;
use crate::CliError;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Full argument vector; replaying it reproduces the run.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub data: Vec<DataRecord>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "ratspn",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            argv: std::env::args().collect(),
            config,
            seeds: BTreeMap::new(),
            data: Vec::new(),
            outputs: Vec::new(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_clock_seconds: 0.0,
            clock: Some(Instant::now()),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_owned(), value);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.wall_clock_seconds = self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64());
        let path = dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(&self).map_err(|e| CliError::data(e.to_string()))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
