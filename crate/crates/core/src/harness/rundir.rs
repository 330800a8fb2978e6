use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable overriding the default output root `runs/`.
pub const RUN_DIR_ENV: &str = "MUSBO_RUN_DIR";

pub fn output_root() -> PathBuf {
    std::env::var_os(RUN_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Layout of one run: `config.json`, `metrics.csv`, `batches/`,
/// `checkpoints/`, `trpo/`, `plots/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates `<output_root>/<run_id>` with `run_id = <prefix>-<UTC timestamp>`.
    pub fn create_timestamped(prefix: &str) -> Result<Self> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        Self::create(&output_root().join(format!("{prefix}-{stamp}")))
    }

    pub fn create(root: &Path) -> Result<Self> {
        let dir = Self { root: root.to_path_buf() };
        for sub in [dir.batches(), dir.checkpoints(), dir.plots(), dir.trpo_logs()] {
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        Ok(dir)
    }

    /// Opens an existing run directory.
    pub fn open(root: &Path) -> Result<Self> {
        let dir = Self { root: root.to_path_buf() };
        if !dir.config().is_file() {
            return Err(Error::Config(format!(
                "{} is not a run directory (no config.json)",
                root.display()
            )));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_id(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn progress(&self) -> PathBuf {
        self.root.join("progress.json")
    }

    pub fn batches(&self) -> PathBuf {
        self.root.join("batches")
    }

    pub fn batch_csv(&self, deployment: usize) -> PathBuf {
        self.batches().join(format!("batch_{deployment}.csv"))
    }

    pub fn store_binary(&self) -> PathBuf {
        self.batches().join("store.bin")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, kind: &str, deployment: usize) -> PathBuf {
        self.checkpoints().join(format!("{kind}_{deployment}.bin"))
    }

    pub fn trpo_logs(&self) -> PathBuf {
        self.root.join("trpo")
    }

    pub fn trpo_log(&self, deployment: usize) -> PathBuf {
        self.trpo_logs().join(format!("deployment_{deployment}.csv"))
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_created() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(&tmp.path().join("r1")).unwrap();
        for sub in ["batches", "checkpoints", "plots", "trpo"] {
            assert!(dir.root().join(sub).is_dir());
        }
        assert_eq!(dir.run_id(), "r1");
        assert!(RunDir::open(dir.root()).is_err());
        assert_eq!(dir.checkpoint("policy", 3), dir.root().join("checkpoints/policy_3.bin"));
    }
}
