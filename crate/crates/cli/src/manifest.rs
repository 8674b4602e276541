//! Append-only run records.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn version() -> String {
    let mut v = format!("deftan {}", env!("CARGO_PKG_VERSION"));
    if let Some(rev) = option_env!("DEFTAN_GIT_DESCRIBE") {
        v.push('-');
        v.push_str(rev);
    }
    v
}

impl RunManifest {
    pub fn new(command: &str, started: f64) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            config_path: None,
            seed: None,
            version: version(),
            started_unix: started,
            finished_unix: 0.0,
            outputs: Vec::new(),
        }
    }

    /// Appends this record as one JSON line.
    pub fn append(mut self, path: &Path) -> anyhow::Result<()> {
        self.finished_unix = now();
        let mut line = serde_json::to_string(&self)?;
        line.push('\n');
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| deftan_io(dir, e))?;
        }
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| deftan_io(path, e))
            .with_context(|| "writing run manifest")
    }
}

pub fn deftan_io(path: &Path, e: std::io::Error) -> anyhow::Error {
    anyhow::Error::new(e).context(format!("{}", path.display()))
}
