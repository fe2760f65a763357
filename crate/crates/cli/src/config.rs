use std::path::{Path, PathBuf};

use hazefield::trainer::TrainConfig;
use hazefield::{io, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Everything a training or evaluation run depends on, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub precision: Precision,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out_dir: PathBuf::from("runs/default"),
            precision: Precision::F32,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => io::read_json(p),
            None => Ok(Self::default()),
        }
    }
}

pub const TOOL_NAME: &str = "hazefield";

#[derive(Debug, Serialize)]
pub struct ToolId {
    pub tool: &'static str,
    pub version: &'static str,
}

pub const TOOL_ID: ToolId = ToolId {
    tool: TOOL_NAME,
    version: env!("CARGO_PKG_VERSION"),
};

/// Writes the tool identifier and the config echo into `dir`.
pub fn stamp<S: Serialize>(dir: &Path, config_name: &str, config: &S) -> Result<()> {
    io::ensure_dir(dir)?;
    io::write_json(&dir.join("tool.json"), &TOOL_ID)?;
    io::write_json(&dir.join(config_name), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults_and_typos_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"precision": "f64", "train": {"seed": 9}}"#).unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.precision, Precision::F64);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.total_iterations, TrainConfig::default().total_iterations);
        std::fs::write(&p, r#"{"out": "x"}"#).unwrap();
        assert!(RunConfig::load(Some(&p)).is_err());
    }
}
