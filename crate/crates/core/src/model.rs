//! Frozen encoder + processed prompts + selective-scan classifier.

use std::fmt;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::backbone::{Encoder, EncoderConfig, PromptContext};
use crate::error::{invalid, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::ssm::{Classifier, ClassifierConfig, ClassifierOutput};
use crate::wavelet::{FilterBank, PromptPath, PromptSet, PromptVariant, SparsifyConfig, WaveletFamily};
use crate::Mode;

/// Nominal parameter count of a wav2vec2/XLS-R-large style waveform front
/// end: seven-layer conv feature encoder with per-layer norm and bias,
/// feature projection, grouped positional convolution, encoder norm and the
/// mask embedding.
pub const NOMINAL_EXTRACTOR_PARAMS: usize = {
    let convs = 512 * 10 + 512 * 512 * 3 * 4 + 512 * 512 * 2 * 2;
    let conv_bias_norm = 7 * 512 + 7 * 2 * 512;
    let projection = 2 * 512 + 512 * 1024 + 1024;
    let pos_conv = 1024 * (1024 / 16) * 128 + 128 + 1024;
    convs + conv_bias_norm + projection + pos_conv + 2 * 1024 + 1024
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: PromptVariant,
    pub p: usize,
    pub m: usize,
    pub sparsify: SparsifyConfig,
    pub path: PromptPath,
    pub family: WaveletFamily,
    pub learnable_filters: bool,
    pub encoder: EncoderConfig,
    pub classifier: ClassifierConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: PromptVariant::PartialWspt,
            p: 10,
            m: 4,
            sparsify: SparsifyConfig { rho: 0.1, enabled: true },
            path: PromptPath::default(),
            family: WaveletFamily::Haar,
            learnable_filters: true,
            encoder: EncoderConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.classifier.validate()?;
        self.sparsify.validate()?;
        if self.p == 0 {
            return invalid("at least one prompt token is required");
        }
        if self.m > self.p {
            return invalid(format!("m={} exceeds p={}", self.m, self.p));
        }
        if self.variant == PromptVariant::PartialWspt && self.m == 0 {
            return invalid("PartialWSPT needs m > 0");
        }
        Ok(())
    }

    /// Wavelet tokens actually enhanced per layer.
    pub fn enhanced_tokens(&self) -> usize {
        self.variant.enhanced_tokens(self.p, self.m)
    }

    /// Whether the filter bank is part of the optimised set.
    pub fn trains_filters(&self) -> bool {
        self.variant.uses_wavelets() && self.learnable_filters
    }
}

/// Trainable vs total parameter counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCount {
    pub trainable: usize,
    pub total: usize,
}

impl ParamCount {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.trainable as f64 / self.total as f64
        }
    }
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}M ({:.3}%)", self.trainable as f64 / 1e6, self.percent())
    }
}

#[derive(Debug, Clone)]
pub struct WaveSpNet<T: Scalar> {
    config: ModelConfig,
    pub encoder: Encoder<T>,
    pub prompts: PromptSet<T>,
    pub bank: FilterBank<T>,
    pub classifier: Classifier<T>,
}

impl<T: Scalar> WaveSpNet<T> {
    /// Prompts and classifier are drawn from `seed`; the encoder from its own seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config.encoder)?;
        let prompts = PromptSet::new(
            config.variant,
            config.encoder.layers,
            config.p,
            config.m,
            config.encoder.d,
            &mut rng::stream(seed, "prompts"),
        )?;
        let bank = FilterBank::new(config.family, config.trains_filters());
        let classifier = Classifier::new(config.classifier, config.encoder.d, &mut rng::stream(seed, "classifier"))?;
        Ok(Self { config, encoder, prompts, bank, classifier })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Encoder output `I = [Z_l, E_l]`.
    pub fn encode<R: Rng + ?Sized>(&self, features: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        let mut ctx = PromptContext {
            bank: &self.bank,
            sparsify: &self.config.sparsify,
            path: self.config.path,
            mode,
            rng,
        };
        self.encoder.encode_with_prompts(features, &self.prompts, &mut ctx)
    }

    pub fn forward<R: Rng + ?Sized>(&self, features: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<ClassifierOutput<T>> {
        let encoded = self.encode(features, mode, rng)?;
        self.classifier.forward(&encoded, mode, rng)
    }

    /// Prompts, learnable filters (if any) and classifier weights, in a
    /// stable order. Never includes encoder tensors.
    pub fn trainable_parameters(&self) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = self.prompts.layers.clone();
        if self.config.trains_filters() {
            out.extend(self.bank.parameters());
        }
        out.extend(self.classifier.tensors());
        out
    }

    pub fn frozen_tensors(&self) -> Vec<&Tensor<T>> {
        self.encoder.tensors()
    }

    /// Counts with `extractor_params` frozen front-end weights added to the total.
    pub fn count_params(&self, extractor_params: usize) -> ParamCount {
        let trainable = self.trainable_parameters().iter().map(Tensor::numel).sum();
        let frozen: usize = self.frozen_tensors().iter().map(|t| t.numel()).sum();
        ParamCount { trainable, total: trainable + frozen + extractor_params }
    }
}

/// Closed-form counts for a config without instantiating weights.
pub fn count_params_for(config: &ModelConfig, extractor_params: usize) -> ParamCount {
    let d = config.encoder.d;
    let prompts = config.encoder.layers * config.p * d;
    let filters = if config.trains_filters() { 4 * config.family.lowpass().len() } else { 0 };
    let trainable = prompts + filters + config.classifier.param_count(d);
    ParamCount { trainable, total: trainable + config.encoder.param_count() + extractor_params }
}

/// Full-scale nominal configuration: 24 × 1024 encoder, 12 scan blocks.
pub fn full_scale_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig { layers: 24, d: 1024, heads: 16, ff: 4096, seed: 0 },
        classifier: ClassifierConfig { blocks: 12, d_state: 16, hidden: 256, dropout: 0.1 },
        ..ModelConfig::default()
    }
}
