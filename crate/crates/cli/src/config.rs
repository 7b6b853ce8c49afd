//! Run configuration: one TOML document, optionally patched by `--set dotted.path=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stinr::data::{GridLayout, MaskMode};
use stinr::graph::AdjacencyFormat;
use stinr::pipeline::ModelConfig;
use stinr::train::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub graph: Option<GraphSection>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "default_layout")]
    pub layout: GridLayout,
    #[serde(default = "default_mask")]
    pub mask: MaskMode,
    /// Pointwise: fraction of observed cells used for training. Drop modes: fraction of
    /// slices hidden.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Newline-separated node ids to hide; overrides `mask`/`rate` when present.
    #[serde(default)]
    pub hidden_nodes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: AdjacencyFormat,
    /// The grid axis indexed by graph nodes.
    #[serde(default)]
    pub axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub model: u64,
    pub data: u64,
}

fn default_layout() -> GridLayout {
    GridLayout::Matrix
}

fn default_mask() -> MaskMode {
    MaskMode::Pointwise
}

fn default_rate() -> f64 {
    0.15
}

fn default_format() -> AdjacencyFormat {
    AdjacencyFormat::EdgeList
}

impl RunConfig {
    /// Reads, patches, parses and validates a config file. Relative paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut doc: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.path = base.join(&cfg.data.path);
        cfg.output_dir = base.join(&cfg.output_dir);
        if let Some(h) = &mut cfg.data.hidden_nodes {
            *h = base.join(&*h);
        }
        if let Some(g) = &mut cfg.graph {
            g.path = base.join(&g.path);
        }
        cfg.validate()?;
        cfg.train.seed = cfg.seeds.data;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e: stinr::Error| CliError::Config(e.to_string());
        self.model.validate().map_err(bad)?;
        self.train.validate().map_err(bad)?;
        if !(self.data.rate > 0.0 && self.data.rate < 1.0) {
            return Err(CliError::Config(format!(
                "data.rate {} must lie in (0, 1)",
                self.data.rate
            )));
        }
        if self.train.seed != 0 && self.train.seed != self.seeds.data {
            return Err(CliError::Config(
                "train.seed is taken from seeds.data; set seeds.data instead".into(),
            ));
        }
        if let Some(g) = &self.graph {
            if g.axis > 1 {
                return Err(CliError::Config("graph.axis must be 0 or 1".into()));
            }
        }
        Ok(())
    }
}

/// Sets `table[a][b]… = value` for `a.b…=value`. The value is read as a TOML literal, or as
/// a bare string when it does not parse as one.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override path {path:?}")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override path {path:?} crosses a non-table value"))
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    const MINIMAL: &str = "output_dir = \"out\"\n[data]\npath = \"field.csv\"\n";

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::load(&write(dir.path(), MINIMAL), &[]).unwrap();
        assert_eq!(cfg.data.path, dir.path().join("field.csv"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.data.rate, 0.15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), &format!("{MINIMAL}[model]\nwidth = 3\n"));
        assert!(matches!(RunConfig::load(&p, &[]), Err(CliError::Config(_))));
        let p = write(dir.path(), MINIMAL);
        assert!(matches!(
            RunConfig::load(&p, &["train.lr=1".into()]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn overrides_patch_leaves() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), MINIMAL);
        let sets = [
            "model.hidden=8".to_string(),
            "model.scales=[1.0, 2.0]".into(),
            "train.steps = 5".into(),
            "data.mask=column_drop".into(),
            "seeds.data=9".into(),
        ];
        let cfg = RunConfig::load(&p, &sets).unwrap();
        assert_eq!(cfg.model.hidden, 8);
        assert_eq!(cfg.model.scales, vec![1.0, 2.0]);
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.data.mask, MaskMode::ColumnDrop);
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn validation_runs_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), MINIMAL);
        for bad in [
            "data.rate=0.0",
            "model.hidden=0",
            "train.learning_rate=-1.0",
            "train.seed=4",
        ] {
            assert!(
                matches!(RunConfig::load(&p, &[bad.into()]), Err(CliError::Config(_))),
                "{bad}"
            );
        }
        assert!(RunConfig::load(&p, &["noequals".into()]).is_err());
        assert!(RunConfig::load(&p, &["output_dir.x=1".into()]).is_err());
    }
}
