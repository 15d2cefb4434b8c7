//! File outputs. Every write goes through here on the main thread.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path for `name`, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let path = self.file(name);
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Write `manifest.json` listing every file written so far.
    pub fn finish(mut self, command: &str, config: &RunConfig, input: Option<InputInfo>) -> Result<(), CliError> {
        let outputs = self.written.clone();
        let manifest = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            library_version: pgarch::VERSION,
            seed: config.seed,
            config,
            input,
            outputs,
        };
        self.json("manifest.json", &manifest)
    }
}

/// Description of the input panel.
#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub panel: PathBuf,
    pub n_periods: usize,
    pub n_assets: usize,
    pub first_date: String,
    pub last_date: String,
    pub dropped_assets: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    library_version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    input: Option<InputInfo>,
    outputs: Vec<String>,
}
