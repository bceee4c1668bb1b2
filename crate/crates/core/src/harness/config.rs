use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_io::{BlobSpec, LabeledDataset, SplitSpec};
use crate::error::{ensure, Error, Result};
use crate::learner::{IlMethod, LearnerConfig};
use crate::quantization::Bits;
use crate::tensor_nn::AdamConfig;

/// A row of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMethod {
    /// All classes trained together in a single task.
    Joint,
    None,
    Icarl,
    FastIcarl,
}

impl GridMethod {
    pub const ALL: [GridMethod; 4] = [GridMethod::Joint, GridMethod::None, GridMethod::Icarl, GridMethod::FastIcarl];

    pub fn as_str(self) -> &'static str {
        match self {
            GridMethod::Joint => "joint",
            GridMethod::None => "none",
            GridMethod::Icarl => "icarl",
            GridMethod::FastIcarl => "fasticarl",
        }
    }

    /// Whether cells of this method vary over bit widths and budgets.
    pub fn uses_memory(self) -> bool {
        matches!(self, GridMethod::Icarl | GridMethod::FastIcarl)
    }

    pub fn il_method(self) -> IlMethod {
        match self {
            GridMethod::Joint | GridMethod::None => IlMethod::None,
            GridMethod::Icarl => IlMethod::Icarl,
            GridMethod::FastIcarl => IlMethod::FastIcarl,
        }
    }
}

impl fmt::Display for GridMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the samples come from: an FDSF file, or Gaussian blobs generated
/// per run from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub classes: u32,
    pub per_class: usize,
    pub dims: usize,
    pub separation: f64,
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let blobs = BlobSpec::default();
        Self {
            path: None,
            classes: blobs.classes,
            per_class: blobs.per_class,
            dims: blobs.dims,
            separation: blobs.separation,
            test_fraction: SplitSpec::default().test_fraction,
        }
    }
}

impl DatasetConfig {
    pub fn blob_spec(&self, seed: u64) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            per_class: self.per_class,
            dims: self.dims,
            separation: self.separation,
            seed,
        }
    }

    /// The file dataset, or `None` for synthetic data.
    pub fn load_file(&self) -> Result<Option<LabeledDataset>> {
        self.path.as_ref().map(LabeledDataset::load).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpochConfig {
    pub base: usize,
    pub incremental: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            base: d.epochs_base,
            incremental: d.epochs_incremental,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub normalize_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = LearnerConfig::default();
        Self {
            hidden: d.hidden,
            feature_dim: d.feature_dim,
            batch_size: d.batch_size,
            learning_rate: d.adam.learning_rate,
            normalize_features: d.normalize_features,
        }
    }
}

/// Experiment grid read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub methods: Vec<GridMethod>,
    pub bits: Vec<Bits>,
    /// Exemplar budgets as fractions of the training set.
    pub budgets: Vec<f64>,
    pub repetitions: usize,
    pub epochs: EpochConfig,
    /// Repetition `r` runs with seed `seed + r`.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    /// Run grid cells on all cores.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            methods: GridMethod::ALL.to_vec(),
            bits: vec![Bits::B32, Bits::B8],
            budgets: vec![0.10],
            repetitions: 5,
            epochs: EpochConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("results"),
            model: ModelConfig::default(),
            parallel: true,
        }
    }
}

impl RunConfig {
    /// Parses and validates; unknown keys anywhere in the document are
    /// reported together.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(toml::Value::Table(table), |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset and output paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                cfg.dataset.path = Some(base.join(p));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("`methods` is empty".into());
        }
        if self.methods.iter().any(|m| m.uses_memory()) {
            if self.bits.is_empty() {
                return bad("`bits` is empty".into());
            }
            if self.budgets.is_empty() {
                return bad("`budgets` is empty".into());
            }
        }
        if let Some(b) = self.budgets.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return bad(format!("budget {b} is outside (0, 1]"));
        }
        if self.repetitions == 0 {
            return bad("`repetitions` must be at least 1".into());
        }
        if self.model.batch_size == 0 || self.model.feature_dim == 0 {
            return bad("`model.batch_size` and `model.feature_dim` must be positive".into());
        }
        if self.model.learning_rate.is_nan() || self.model.learning_rate <= 0.0 {
            return bad(format!("learning rate {} must be positive", self.model.learning_rate));
        }
        let d = &self.dataset;
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return bad(format!("test fraction {} is outside (0, 1)", d.test_fraction));
        }
        if d.path.is_none() && (d.classes < 2 || !d.classes.is_multiple_of(2)) {
            return bad(format!("synthetic class count must be even and >= 2, got {}", d.classes));
        }
        Ok(())
    }

    pub fn learner_config(&self, method: IlMethod, bits: Bits, budget: f64, seed: u64) -> LearnerConfig {
        LearnerConfig {
            method,
            bits,
            budget_fraction: budget,
            adam: AdamConfig {
                learning_rate: self.model.learning_rate,
                ..AdamConfig::default()
            },
            hidden: self.model.hidden.clone(),
            feature_dim: self.model.feature_dim,
            epochs_base: self.epochs.base,
            epochs_incremental: self.epochs.incremental,
            batch_size: self.model.batch_size,
            seed,
            normalize_features: self.model.normalize_features,
        }
    }
}

pub(crate) fn ensure_even_classes(n: u32) -> Result<()> {
    ensure!(n >= 2 && n.is_multiple_of(2), "the incremental protocol needs an even class count >= 2, dataset has {n}");
    Ok(())
}
