use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::AlignConfig;
use crate::embed::{import_embeddings, EmbeddingTable, DEFAULT_DIM};
use crate::env::normalize_text;
use crate::error::{Error, Result};
use crate::policy::TrainConfig;
use crate::transfer::Strategy;

pub const DEFAULT_BASE_INSTRUCTIONS: [&str; 4] =
    ["top left first", "top left second", "top right first", "top right second"];

/// Target used by default: goal `(0, N-3)`, i.e. `(0, 7)` on a 10×10 board.
/// It is also known as "top left third", which is recorded verbatim in
/// [`ExperimentConfig::target_label`] and echoed in reports; the goal always
/// comes from parsing `target_instruction`.
pub const DEFAULT_TARGET: &str = "top right third";
pub const TARGET_LABEL: &str = "top left third";

/// Experiment settings, loadable from TOML. Every field has a default.
///
/// ```toml
/// grid_sizes = [8, 10]
/// trials = 10
/// strategies = ["scratch", "language", "clip"]
/// seed = 0
/// out_dir = "out"
///
/// [train]
/// learning_rate = 0.003
///
/// [align]
/// epochs = 2000
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid_sizes: Vec<usize>,
    pub base_instructions: Vec<String>,
    pub target_instruction: String,
    pub target_label: String,
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub embedding_dim: usize,
    /// Pre-computed instruction embeddings to use instead of the built-in
    /// encoder.
    pub embeddings_file: Option<PathBuf>,
    pub train: TrainConfig,
    pub align: AlignConfig,
    pub probe: ProbeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    /// Smallest board where each color band (4 columns) is wider than the
    /// 3-row gap between shapes, so same-color objects are strictly closer.
    pub grid_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            colors: vec!["red".into(), "blue".into(), "green".into()],
            shapes: vec!["box".into(), "cone".into()],
            grid_size: 12,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid_sizes: vec![8, 10, 15, 25],
            base_instructions: DEFAULT_BASE_INSTRUCTIONS.iter().map(|s| s.to_string()).collect(),
            target_instruction: DEFAULT_TARGET.into(),
            target_label: TARGET_LABEL.into(),
            trials: 10,
            strategies: Strategy::ALL.to_vec(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            embedding_dim: DEFAULT_DIM,
            embeddings_file: None,
            train: TrainConfig::default(),
            align: AlignConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The imported table when `embeddings_file` is set, else the built-in
    /// encoder at `embedding_dim`.
    pub fn embedding_table(&self) -> Result<EmbeddingTable> {
        match &self.embeddings_file {
            Some(path) => import_embeddings(path),
            None => Ok(EmbeddingTable::builtin(self.embedding_dim)),
        }
    }

    /// Size of the base set (the sampled source descriptions).
    pub fn base_count(&self) -> usize {
        self.base_instructions.len()
    }

    /// Size of the target set; one target per experiment.
    pub fn target_count(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.grid_sizes.is_empty() {
            return bad("grid_sizes is empty".into());
        }
        if self.base_instructions.len() < 2 {
            return bad("at least two base instructions are needed for alignment".into());
        }
        let norm: Vec<String> = self.base_instructions.iter().map(|s| normalize_text(s)).collect();
        if norm.iter().collect::<BTreeSet<_>>().len() != norm.len() {
            return bad("base instructions must be pairwise distinct".into());
        }
        if norm.contains(&normalize_text(&self.target_instruction)) {
            return bad("target instruction must not be a base instruction".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected".into());
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        self.train.validate()?;
        Ok(())
    }
}
