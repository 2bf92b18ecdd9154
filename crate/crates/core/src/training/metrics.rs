use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::neural::Checkpoint;

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Training episodes completed.
    pub episode: usize,
    /// Greedy victim win rate at this point.
    pub win_rate: f64,
    /// Mean per-episode reward of the learning party since the previous row.
    pub mean_episode_reward: f64,
    /// Mean TD loss since the previous row; NaN when no update ran.
    pub loss: f64,
    pub epsilon: f64,
}

/// Metrics and checkpoints of one training phase.
///
/// With a directory, every row is appended to `<name>.csv` as soon as it is
/// produced and checkpoints land next to it.
#[derive(Debug)]
pub struct RunLog {
    pub rows: Vec<MetricsRow>,
    dir: Option<PathBuf>,
    name: String,
    writer: Option<csv::Writer<File>>,
}

impl RunLog {
    /// Keeps rows in memory only.
    pub fn memory(name: &str) -> Self {
        Self {
            rows: Vec::new(),
            dir: None,
            name: name.to_string(),
            writer: None,
        }
    }

    /// Writes `<dir>/<name>.csv`, replacing any previous file.
    pub fn to_dir(dir: &Path, name: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(dir.join(format!("{name}.csv")))?;
        Ok(Self {
            rows: Vec::new(),
            dir: Some(dir.to_path_buf()),
            name: name.to_string(),
            writer: Some(csv::Writer::from_writer(file)),
        })
    }

    pub fn csv_path(&self) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.csv", self.name)))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        self.rows.push(row);
        Ok(())
    }

    /// Saves `ck` as `<dir>/<name>-<tag>.ckpt`; a no-op without a directory.
    pub fn checkpoint(&self, ck: &Checkpoint, tag: &str) -> Result<Option<PathBuf>> {
        match &self.dir {
            Some(d) => {
                let path = d.join(format!("{}-{tag}.ckpt", self.name));
                ck.save(&path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
