//! Run configuration documents.

use std::path::{Path, PathBuf};

use nri_core::config::{ModelConfig, TrainConfig};
use nri_core::data::Dataset;
use serde::{Deserialize, Serialize};

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;

/// Horizons reported in the prediction-error table.
pub const TABLE_HORIZONS: [usize; 4] = [1, 10, 20, 40];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub batch_size: usize,
    pub horizons: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            horizons: TABLE_HORIZONS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Directory with `train.nrid`, `val.nrid`, `test.nrid` and `dataset.json`.
    pub data: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Set when the document leaves `train.lambda` out; resolution then picks
    /// the per-dataset default.
    #[serde(skip)]
    pub lambda_from_data: bool,
}

impl RunConfig {
    pub fn new(data: PathBuf) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            data,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            lambda_from_data: false,
        }
    }

    /// Parses a JSON document, reporting the key path of the first problem.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| RunError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let doc: serde_json::Value = serde_json::from_str(text)?;
        cfg.lambda_from_data = doc.pointer("/train/lambda").is_none();
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(RunError::Schema {
                path: "schema_version".into(),
                message: format!("expected {SCHEMA_VERSION}, found {}", cfg.schema_version),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::missing(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.data.is_relative() {
            cfg.data = path.parent().unwrap_or(Path::new(".")).join(&cfg.data);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Fills the data-dependent model dimensions and validates everything.
    pub fn resolve(&mut self, train: &Dataset) -> Result<(), RunError> {
        self.model.n = train.n;
        self.model.t = train.t;
        self.model.d = train.d;
        self.model.k = train.k;
        if std::mem::take(&mut self.lambda_from_data) {
            self.train.lambda = TrainConfig::default_lambda(train.family, train.n);
        }
        let schema = |e: nri_core::config::ConfigError| {
            let nri_core::config::ConfigError::Invalid { field, requirement } = e;
            RunError::Schema {
                path: field.into(),
                message: format!("must be {requirement}"),
            }
        };
        self.model.validate().map_err(schema)?;
        self.train.validate().map_err(schema)?;
        if self.eval.batch_size == 0 {
            return Err(RunError::Schema {
                path: "eval.batch_size".into(),
                message: "must be positive".into(),
            });
        }
        if let Ok(abs) = self.data.canonicalize() {
            self.data = abs;
        }
        Ok(())
    }
}
