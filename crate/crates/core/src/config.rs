//! The serialized description of a full pipeline run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{BenchConfig, CvConfig};
use crate::hash::BallTreeConfig;
use crate::knn::KnnConfig;
use crate::masking::MaskingConfig;
use crate::objectives::LossConfig;
use crate::synth::SynthSpec;
use crate::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub positive_class: u32,
    pub seed: u64,
    pub bench: BenchConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            positive_class: 2,
            seed: 7,
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub synth: SynthSpec,
    pub masking: MaskingConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub hash: BallTreeConfig,
    pub knn: KnnConfig,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train_config().validate()?;
        if self.synth.patch_size != self.train.patch_size {
            return Err(Error::InvalidConfig(format!(
                "synth.patch_size {} != train.patch_size {}",
                self.synth.patch_size, self.train.patch_size
            )));
        }
        if self.knn.k == 0 {
            return Err(Error::InvalidConfig("knn.k must be at least 1".into()));
        }
        if self.hash.leaf_capacity == 0 || self.hash.sample_size == 0 {
            return Err(Error::InvalidConfig("hash leaf_capacity and sample_size must be positive".into()));
        }
        if self.eval.n_folds < 2 {
            return Err(Error::InvalidConfig("eval.n_folds must be at least 2".into()));
        }
        self.eval.bench.validate()
    }

    /// The training section with the loss and masking sections folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            masking: self.masking,
            ..self.train.clone()
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            n_folds: self.eval.n_folds,
            k: self.knn.k,
            positive_class: self.eval.positive_class,
        }
    }

    /// Points every seeded component at the same master seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
        self.hash.seed = seed;
        self.eval.seed = seed;
        self.eval.bench.seed = seed;
    }
}
