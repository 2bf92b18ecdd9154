//! Run manifests: what was run, from which config, with which seeds, and
//! which files it produced.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// File name of the archived canonical config, relative to the manifest.
    pub config_file: String,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
    /// Output files, relative to the manifest directory.
    pub artifacts: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";
    pub const CONFIG_FILE: &'static str = "config.txt";

    /// Archives the canonical config next to the manifest and writes the
    /// manifest with status `running`.
    pub fn start(dir: &Path, command: &str, config: &KvConfig, seeds: Vec<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(Self::CONFIG_FILE), config.to_text().as_bytes())?;
        let m = Self {
            command: command.to_string(),
            config_hash: config.hash(),
            config_file: Self::CONFIG_FILE.to_string(),
            seeds,
            code_version: CODE_VERSION.to_string(),
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            artifacts: Vec::new(),
        };
        m.write(dir)?;
        Ok(m)
    }

    pub fn add_artifact(&mut self, dir: &Path, path: &Path) {
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
    }

    pub fn finish(&mut self, dir: &Path, status: &str) -> Result<()> {
        self.finished_unix = Some(now());
        self.status = status.to_string();
        self.artifacts.sort();
        self.write(dir)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(
            &dir.join(Self::FILE),
            serde_json::to_string_pretty(self)?.as_bytes(),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE);
        if !path.exists() {
            return Err(Error::Dependency {
                missing: vec![path],
            });
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// The archived config, verified against the recorded hash.
    pub fn archived_config(&self, dir: &Path) -> Result<KvConfig> {
        let cfg = KvConfig::load(&dir.join(&self.config_file))?;
        if cfg.hash() != self.config_hash {
            return Err(Error::Validation(format!(
                "archived config hashes to {} but manifest records {}",
                cfg.hash(),
                self.config_hash
            )));
        }
        Ok(cfg)
    }
}
