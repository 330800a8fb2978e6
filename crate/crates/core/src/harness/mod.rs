//! Configuration files, run directories, CSV tables, SVG curves and seeds.

mod plot;
mod rundir;
mod seeds;
mod table;

use std::path::Path;

use crate::error::{Error, Result};
use crate::orchestrator::RunConfig;

pub use plot::{emit_curves, render_svg, CurveGroup};
pub use rundir::{output_root, RunDir, RUN_DIR_ENV};
pub use seeds::SeedStreams;
pub use table::{aggregate, Aggregate, Table};

/// Reads and validates a JSON run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes the fully defaulted configuration as pretty JSON.
pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_json() + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_emit_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.json");
        std::fs::write(&src, r#"{"env":"pendulum","deployments":3,"batch_size":500,"seed":9}"#).unwrap();
        let cfg = load_config(&src).unwrap();
        let out = dir.path().join("out.json");
        save_config(&cfg, &out).unwrap();
        assert_eq!(load_config(&out).unwrap(), cfg);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_config(Path::new("/nonexistent/cfg.json")), Err(Error::Io { .. })));
    }
}
