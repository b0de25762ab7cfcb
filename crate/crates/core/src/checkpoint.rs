//! Versioned checkpoint: a `WSPNET1` header line followed by JSON.
//!
//! Tensor values and optimizer moments are stored as IEEE-754 bit patterns,
//! so a save/load round trip is bitwise exact. Encoder weights are not
//! stored; they are rebuilt from the encoder seed in the config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::WaveSpNet;
use crate::optim::Adam;
use crate::scalar::Scalar;

pub const MAGIC: &str = "WSPNET1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub bits: Vec<u64>,
}

impl StoredTensor {
    fn from_values<T: Scalar>(shape: &[usize], values: &[T]) -> Self {
        Self { shape: shape.to_vec(), bits: values.iter().map(|v| v.as_f64().to_bits()).collect() }
    }

    fn values<T: Scalar>(&self) -> Vec<T> {
        self.bits.iter().map(|&b| T::from_f64_lossy(f64::from_bits(b))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub backbone_seed: u64,
    /// Trainable tensors in `WaveSpNet::trainable_parameters` order.
    pub tensors: Vec<StoredTensor>,
    pub adam_step: u64,
    pub adam_m: Vec<StoredTensor>,
    pub adam_v: Vec<StoredTensor>,
    pub best_dev_eer: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    /// Captures the current weights and optimizer state of `net`.
    pub fn capture<T: Scalar>(
        config: &ExperimentConfig,
        net: &WaveSpNet<T>,
        opt: &Adam<T>,
        best_dev_eer: f64,
        best_epoch: usize,
        history: Vec<EpochRecord>,
    ) -> Self {
        let params = net.trainable_parameters();
        let tensors = params.iter().map(|t| StoredTensor::from_values(t.shape(), &t.data())).collect();
        let (m, v) = opt.moments();
        let store = |xs: &[Vec<T>]| {
            xs.iter().zip(&params).map(|(x, p)| StoredTensor::from_values(p.shape(), x)).collect()
        };
        Self {
            config: config.clone(),
            backbone_seed: net.config().encoder.seed,
            tensors,
            adam_step: opt.steps(),
            adam_m: store(m),
            adam_v: store(v),
            best_dev_eer,
            best_epoch,
            history,
        }
    }

    /// Rebuilds the model: fresh construction from the config, then the
    /// stored trainable values.
    pub fn model<T: Scalar>(&self) -> Result<WaveSpNet<T>> {
        let mut model_cfg = self.config.model_config()?;
        model_cfg.encoder.seed = self.backbone_seed;
        let net = WaveSpNet::new(model_cfg, self.config.train.seed)?;
        let params = net.trainable_parameters();
        if params.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter().zip(&self.tensors) {
            if p.shape() != s.shape.as_slice() || p.numel() != s.bits.len() {
                return Err(Error::Format(format!("stored shape {:?} does not match {:?}", s.shape, p.shape())));
            }
            *p.data_mut() = s.values();
        }
        Ok(net)
    }

    /// Adam over `net`'s trainable set with the stored moments.
    pub fn optimizer<T: Scalar>(&self, net: &WaveSpNet<T>) -> Result<Adam<T>> {
        let mut opt = Adam::new(net.trainable_parameters(), self.config.train.lr)?;
        let load = |xs: &[StoredTensor]| xs.iter().map(StoredTensor::values).collect();
        opt.restore(self.adam_step, load(&self.adam_m), load(&self.adam_v))?;
        Ok(opt)
    }

    pub fn to_text(&self) -> String {
        format!("{MAGIC}\n{}\n", serde_json::to_string(self).expect("checkpoint serialises"))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.strip_prefix('\n'))
            .ok_or_else(|| Error::Format(format!("missing `{MAGIC}` header")))?;
        let ckpt: Self = serde_json::from_str(body).map_err(|e| Error::Format(format!("checkpoint body: {e}")))?;
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Copies of the current values of `tensors`.
pub(crate) fn snapshot<T: Scalar>(tensors: &[Tensor<T>]) -> Vec<Vec<T>> {
    tensors.iter().map(Tensor::to_vec).collect()
}
