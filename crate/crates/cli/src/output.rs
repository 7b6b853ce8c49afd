use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use stinr::data::{format_grid_csv, GridField, GridLayout};

use crate::config::Seeds;
use crate::error::{CliError, CliResult};

/// Collects the files a command writes into one output directory.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(CliError::io(&path))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text)
    }

    /// Matrix layout for 2-D single-channel fields, long layout otherwise.
    pub fn write_grid(&mut self, name: &str, field: &GridField) -> CliResult<PathBuf> {
        let layout = if field.arity() == 2 && field.channels() == 1 {
            GridLayout::Matrix
        } else {
            GridLayout::Long
        };
        self.write(name, format_grid_csv(field, layout)?)
    }

    pub fn note_written(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    /// Writes `manifest.json`. Everything except `created_unix_secs` is a pure function of
    /// the command's inputs.
    pub fn finish(mut self, command: &str, config: Value, seeds: Seeds) -> CliResult<PathBuf> {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let files = std::mem::take(&mut self.written);
        let manifest = json!({
            "command": command,
            "config": config,
            "seeds": { "model": seeds.model, "data": seeds.data },
            "versions": {
                "stinr": env!("CARGO_PKG_VERSION"),
                "model_format": stinr::model::FORMAT_VERSION,
            },
            "outputs": files,
            "created_unix_secs": created,
        });
        self.write_json("manifest.json", &manifest)
    }
}
