//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//!
//! [data]
//! path = "data/synth/data.csv"   # omit to generate synthetic data in memory
//! columns = "data/synth/columns.txt"
//!
//! [data.synthetic]
//! instances = 60000
//!
//! [model]
//! topology = "serial"
//! block_widths = [64, 64, 64]
//!
//! [train]
//! learning_rate = 1e-3
//!
//! [output]
//! dir = "runs/serial"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use masknet::data::{NumericPrep, SyntheticConfig};
use masknet::model::ModelSpec;
use masknet::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `model.seed`, `train.seed` and the split seed when set.
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Sidecar `name,kind` file; defaults to `columns.txt` next to `path`.
    pub columns: Option<PathBuf>,
    pub delimiter: char,
    /// `raw`, `log` or `standardize`.
    pub numeric: String,
    pub split_seed: Option<u64>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            columns: None,
            delimiter: ',',
            numeric: "raw".into(),
            split_seed: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl DataConfig {
    pub fn numeric_prep(&self) -> Result<NumericPrep, CliError> {
        parse_numeric(&self.numeric)
    }

    pub fn delimiter_byte(&self) -> Result<u8, CliError> {
        delimiter_byte(self.delimiter)
    }

    pub fn columns_path(&self) -> Option<PathBuf> {
        self.columns.clone().or_else(|| self.path.as_deref().map(default_columns_path))
    }
}

pub fn parse_numeric(s: &str) -> Result<NumericPrep, CliError> {
    match s {
        "raw" => Ok(NumericPrep::Raw),
        "log" => Ok(NumericPrep::Log),
        "standardize" => Ok(NumericPrep::Standardize),
        other => Err(CliError::Usage(format!(
            "unknown numeric preprocessing {other:?} (expected raw, log or standardize)"
        ))),
    }
}

pub fn delimiter_byte(c: char) -> Result<u8, CliError> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| CliError::Usage(format!("delimiter {c:?} must be a single ASCII character")))
}

pub fn default_columns_path(data: &Path) -> PathBuf {
    data.with_file_name("columns.txt")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs/default"),
            checkpoint: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))?;
        if let Some(seed) = cfg.seed {
            cfg.model.seed = seed;
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.or(self.seed).unwrap_or(1)
    }
}
