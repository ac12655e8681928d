//! Experiment configuration: one JSON document holding every setting a run
//! needs. Unknown keys are rejected and every section is validated before
//! any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasynth::DatasetSpec;
use crate::error::{Error, Result};
use crate::gan::TrainConfig;
use crate::quality::{QualityFunctionSpec, SurrogateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Designs sampled from a generator to form the evaluation pool.
    pub pool_size: usize,
    pub n_repetitions: usize,
    pub subset_size: usize,
    pub novelty_threshold: f64,
    pub top_k: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            n_repetitions: 1000,
            subset_size: 100,
            novelty_threshold: 0.1,
            top_k: 5,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.n_repetitions == 0 || self.subset_size == 0 {
            return Err(Error::Config("evaluation sizes must be >= 1".into()));
        }
        if self.subset_size > self.pool_size {
            return Err(Error::Config(format!(
                "evaluation.subset_size {} exceeds pool_size {}",
                self.subset_size, self.pool_size
            )));
        }
        if !(self.novelty_threshold >= 0.0 && self.novelty_threshold.is_finite()) {
            return Err(Error::Config("evaluation.novelty_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub quality: QualityFunctionSpec,
    pub surrogate: SurrogateConfig,
    pub train: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetSpec::default(),
            quality: QualityFunctionSpec::default(),
            surrogate: SurrogateConfig::default(),
            train: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.quality.validate()?;
        self.surrogate.validate()?;
        self.train.validate()?;
        self.evaluation.validate()?;
        if self.dataset.domain != self.quality.domain {
            return Err(Error::Config("dataset.domain and quality.domain differ".into()));
        }
        if self.compare.seeds.is_empty() {
            return Err(Error::Config("compare.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Training settings with the run seed filled in.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
