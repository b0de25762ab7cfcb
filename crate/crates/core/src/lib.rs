//! Wavelet-sparse prompt tuning for bonafide/spoof speech classification.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, with `*F32` twins.

pub mod ablate;
pub mod autodiff;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod ssm;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training or inference behaviour for dropout and sparsification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub type Tensor = autodiff::Tensor<f64>;
pub type FilterBank = wavelet::FilterBank<f64>;
pub type PromptSet = wavelet::PromptSet<f64>;
pub type Encoder = backbone::Encoder<f64>;
pub type Classifier = ssm::Classifier<f64>;
pub type Model = model::WaveSpNet<f64>;
pub type Adam = optim::Adam<f64>;

pub type TensorF32 = autodiff::Tensor<f32>;
pub type FilterBankF32 = wavelet::FilterBank<f32>;
pub type PromptSetF32 = wavelet::PromptSet<f32>;
pub type EncoderF32 = backbone::Encoder<f32>;
pub type ClassifierF32 = ssm::Classifier<f32>;
pub type ModelF32 = model::WaveSpNet<f32>;
pub type AdamF32 = optim::Adam<f32>;
