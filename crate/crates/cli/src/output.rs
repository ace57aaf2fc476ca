//! CSV tables plus a JSON sidecar per table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
    command: &'static str,
}

impl OutputDir {
    pub fn create(root: &Path, command: &'static str) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            command,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` from a header and rows of already formatted fields,
    /// then `name` with a `.json` extension describing it.
    pub fn table<S: Serialize>(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
        config: &ScenarioConfig,
        extra: S,
    ) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.sidecar(name, config, extra)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn sidecar<S: Serialize>(&self, name: &str, config: &ScenarioConfig, extra: S) -> CliResult<()> {
        let path = self.path(name).with_extension("json");
        let doc = json!({
            "tool": "pcdf",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "output": name,
            "config": config,
            "details": extra,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}
