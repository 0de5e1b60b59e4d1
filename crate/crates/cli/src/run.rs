//! Per-run output directory and manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const EFFECTIVE_CONFIG: &str = "config.txt";

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    started: String,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `explicit`, or `<out_dir>/<command>-<UTC timestamp>` with a
    /// numeric suffix if that already exists, and writes the effective
    /// configuration into it.
    pub fn create(command: &str, cfg: &RunConfig, explicit: Option<&Path>) -> Result<Self> {
        let now = Utc::now();
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let base = cfg
                    .out_dir
                    .join(format!("{command}-{}", now.format("%Y%m%dT%H%M%SZ")));
                let mut candidate = base.clone();
                let mut i = 1;
                while candidate.exists() {
                    candidate = PathBuf::from(format!("{}-{i}", base.display()));
                    i += 1;
                }
                candidate
            }
        };
        fs::create_dir_all(&path)
            .with_context(|| format!("creating run directory {}", path.display()))?;
        let mut run = RunDir {
            path,
            command: command.to_string(),
            started: now.to_rfc3339_opts(SecondsFormat::Secs, true),
            files: Vec::new(),
        };
        run.write(EFFECTIVE_CONFIG, cfg.render())?;
        Ok(run)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes `contents` to `name` and records it in the manifest.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.file(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.record(name);
        Ok(p)
    }

    /// Records a file written by other means.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    /// Writes the manifest: command, arguments, times, status and the
    /// SHA-256 of every recorded file.
    pub fn finish(&self, status: &str) -> Result<()> {
        let mut files = serde_json::Map::new();
        for name in &self.files {
            let p = self.file(name);
            if p.is_file() {
                files.insert(name.clone(), json!(file_sha256(&p)?));
            }
        }
        let manifest = json!({
            "command": self.command,
            "args": std::env::args().collect::<Vec<_>>(),
            "version": env!("CARGO_PKG_VERSION"),
            "started": self.started,
            "finished": Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            "status": status,
            "files": files,
        });
        fs::write(self.file(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
