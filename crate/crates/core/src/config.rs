//! Experiment configuration: sectioned `key = value` text (TOML subset).
//! Unknown sections or keys are errors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::EncoderConfig;
use crate::data::{ArtifactKind, CorpusSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::ssm::ClassifierConfig;
use crate::wavelet::{PromptPath, PromptVariant, SparsifyConfig, WaveletFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Learnable,
    Fixed,
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Learnable => "learnable",
            Self::Fixed => "fixed",
        })
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "learnable" => Ok(Self::Learnable),
            "fixed" => Ok(Self::Fixed),
            _ => Err(Error::Config(format!("filters must be `learnable` or `fixed`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: String,
    pub p: usize,
    pub m: usize,
    pub rho: f64,
    pub sparsify: bool,
    pub filters: String,
    pub family: String,
    pub decompose: bool,
    pub reconstruct: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: PromptVariant::PartialWspt.to_string(),
            p: 10,
            m: 4,
            rho: 0.1,
            sparsify: true,
            filters: FilterMode::Learnable.to_string(),
            family: WaveletFamily::Haar.to_string(),
            decompose: true,
            reconstruct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub layers: usize,
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub seed: u64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self { layers: e.layers, d: e.d, heads: e.heads, ff: e.ff, seed: e.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub blocks: usize,
    pub d_state: usize,
    pub hidden: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        Self { blocks: c.blocks, d_state: c.d_state, hidden: c.hidden }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lambda_pr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { lr: 5e-4, batch: 16, dropout: 0.1, max_epochs: 100, patience: 7, seed: 0, lambda_pr: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Corpus manifest; relative paths resolve against the working directory.
    pub manifest: String,
    pub chunk_seconds: f64,
    pub frontend_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { manifest: "corpus/manifest.txt".into(), chunk_seconds: 1.0, frontend_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let c = CorpusSpec::default();
        Self {
            n_train: c.n_train,
            n_dev: c.n_dev,
            n_eval: c.n_eval,
            seed: c.seed,
            artifacts: c.artifact_kinds.iter().map(ToString::to_string).collect(),
            min_seconds: c.min_seconds,
            max_seconds: c.max_seconds,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub encoder: EncoderSection,
    pub classifier: ClassifierSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub corpus: CorpusSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?;
        self.corpus_spec()?;
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", t.lr)));
        }
        if t.batch == 0 || t.max_epochs == 0 || t.patience == 0 {
            return Err(Error::Config("train.batch, train.max_epochs and train.patience must be positive".into()));
        }
        if !(t.lambda_pr.is_finite() && t.lambda_pr >= 0.0) {
            return Err(Error::Config(format!("train.lambda_pr must be non-negative, got {}", t.lambda_pr)));
        }
        if !(self.data.chunk_seconds.is_finite() && self.data.chunk_seconds > 0.0) {
            return Err(Error::Config(format!("data.chunk_seconds must be positive, got {}", self.data.chunk_seconds)));
        }
        Ok(())
    }

    pub fn filter_mode(&self) -> Result<FilterMode> {
        self.model.filters.parse()
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            variant: m.variant.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            p: m.p,
            m: m.m,
            sparsify: SparsifyConfig { rho: m.rho, enabled: m.sparsify },
            path: PromptPath { decompose: m.decompose, reconstruct: m.reconstruct },
            family: m.family.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            learnable_filters: self.filter_mode()? == FilterMode::Learnable,
            encoder: EncoderConfig {
                layers: self.encoder.layers,
                d: self.encoder.d,
                heads: self.encoder.heads,
                ff: self.encoder.ff,
                seed: self.encoder.seed,
            },
            classifier: ClassifierConfig {
                blocks: self.classifier.blocks,
                d_state: self.classifier.d_state,
                hidden: self.classifier.hidden,
                dropout: self.train.dropout,
            },
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn corpus_spec(&self) -> Result<CorpusSpec> {
        let c = &self.corpus;
        let spec = CorpusSpec {
            n_train: c.n_train,
            n_dev: c.n_dev,
            n_eval: c.n_eval,
            seed: c.seed,
            artifact_kinds: c.artifacts.iter().map(|a| a.parse::<ArtifactKind>()).collect::<Result<_>>()?,
            min_seconds: c.min_seconds,
            max_seconds: c.max_seconds,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}
