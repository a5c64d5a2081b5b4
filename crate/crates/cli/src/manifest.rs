use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const MANIFEST: &str = "manifest.jsonl";

/// One run of one command. Appended as a JSON line to the output
/// directory's manifest, never rewritten.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: &'static str,
    pub started_unix: u64,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            config: Value::Null,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            duration_secs: 0.0,
        }
    }

    pub fn append(mut self, dir: &Path, elapsed: Duration) -> std::io::Result<()> {
        self.duration_secs = elapsed.as_secs_f64();
        let mut file = OpenOptions::new().create(true).append(true).open(dir.join(MANIFEST))?;
        writeln!(file, "{}", serde_json::to_string(&self)?)
    }
}
