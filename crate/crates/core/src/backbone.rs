//! Frozen pre-norm transformer encoder with deep prompt injection.
//!
//! At every layer the previous layer's prompt outputs are discarded and a
//! fresh processed prompt is prepended to the running sequence embedding.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{invalid, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::wavelet::{FilterBank, PromptPath, PromptSet, SparsifyConfig};
use crate::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { layers: 4, d: 64, heads: 4, ff: 128, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return invalid("encoder needs at least one layer");
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return invalid(format!("d={} is not divisible by heads={}", self.d, self.heads));
        }
        if self.d % 2 != 0 || self.ff == 0 {
            return invalid(format!("d={} must be even and ff={} positive", self.d, self.ff));
        }
        Ok(())
    }

    /// Closed-form parameter count of the encoder.
    pub fn param_count(&self) -> usize {
        let (d, ff) = (self.d, self.ff);
        let attention = 4 * (d * d + d);
        let feed_forward = d * ff + ff + ff * d + d;
        let norms = 4 * d;
        self.layers * (attention + feed_forward + norms)
    }
}

fn frozen<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (3.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..shape.iter().product::<usize>()).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// One pre-norm transformer layer. Every tensor is frozen.
#[derive(Debug, Clone)]
pub struct EncoderLayer<T: Scalar> {
    norm1: (Tensor<T>, Tensor<T>),
    wq: Tensor<T>,
    bq: Tensor<T>,
    wk: Tensor<T>,
    bk: Tensor<T>,
    wv: Tensor<T>,
    bv: Tensor<T>,
    wo: Tensor<T>,
    bo: Tensor<T>,
    norm2: (Tensor<T>, Tensor<T>),
    w1: Tensor<T>,
    b1: Tensor<T>,
    w2: Tensor<T>,
    b2: Tensor<T>,
    heads: usize,
}

impl<T: Scalar> EncoderLayer<T> {
    fn new<R: Rng + ?Sized>(d: usize, heads: usize, ff: usize, rng: &mut R) -> Self {
        let norm = || (Tensor::full(&[d], T::one()), Tensor::zeros(&[d]));
        Self {
            norm1: norm(),
            wq: frozen(&[d, d], d, rng),
            bq: Tensor::zeros(&[d]),
            wk: frozen(&[d, d], d, rng),
            bk: Tensor::zeros(&[d]),
            wv: frozen(&[d, d], d, rng),
            bv: Tensor::zeros(&[d]),
            wo: frozen(&[d, d], d, rng),
            bo: Tensor::zeros(&[d]),
            norm2: norm(),
            w1: frozen(&[d, ff], d, rng),
            b1: Tensor::zeros(&[ff]),
            w2: frozen(&[ff, d], ff, rng),
            b2: Tensor::zeros(&[d]),
            heads,
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.norm1.0, &self.norm1.1, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo,
            &self.bo, &self.norm2.0, &self.norm2.1, &self.w1, &self.b1, &self.w2, &self.b2,
        ]
    }

    /// `x + MHA(LN(x))`, then `+ FFN(LN(.))`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, d) = x.dims2()?;
        let eps = T::from_f64_lossy(1e-5);
        let h = x.layer_norm(&self.norm1.0, &self.norm1.1, eps)?;
        let q = h.matmul(&self.wq)?.add_row(&self.bq)?;
        let k = h.matmul(&self.wk)?.add_row(&self.bk)?;
        let v = h.matmul(&self.wv)?.add_row(&self.bv)?;
        let dh = d / self.heads;
        let scale = T::one() / T::from_usize(dh).expect("size fits").sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = q.slice(1, head * dh, dh)?;
            let kh = k.slice(1, head * dh, dh)?;
            let vh = v.slice(1, head * dh, dh)?;
            let attn = qh.matmul(&kh.transpose()?)?.scale(scale).softmax();
            outs.push(attn.matmul(&vh)?);
        }
        let mixed = Tensor::concat(&outs, 1)?.matmul(&self.wo)?.add_row(&self.bo)?;
        let x = x.add(&mixed)?;
        let h = x.layer_norm(&self.norm2.0, &self.norm2.1, eps)?;
        let f = h.matmul(&self.w1)?.add_row(&self.b1)?.silu().matmul(&self.w2)?.add_row(&self.b2)?;
        x.add(&f)
    }
}

/// Everything prompt processing needs besides the prompts themselves.
pub struct PromptContext<'a, T: Scalar, R: Rng + ?Sized> {
    pub bank: &'a FilterBank<T>,
    pub sparsify: &'a SparsifyConfig,
    pub path: PromptPath,
    pub mode: Mode,
    pub rng: &'a mut R,
}

/// Prompt and sequence outputs of one layer.
#[derive(Debug, Clone)]
pub struct LayerOutput<T: Scalar> {
    pub prompt: Tensor<T>,
    pub sequence: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Encoder<T: Scalar> {
    config: EncoderConfig,
    layers: Vec<EncoderLayer<T>>,
}

impl<T: Scalar> Encoder<T> {
    /// Weights are derived from `config.seed` alone, so an encoder can be
    /// rebuilt bit-for-bit from its config.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|k| {
                let mut r = rng::indexed(config.seed, "backbone", k as u64);
                EncoderLayer::new(config.d, config.heads, config.ff, &mut r)
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layer(&self, k: usize) -> &EncoderLayer<T> {
        &self.layers[k]
    }

    /// All frozen tensors, in a stable order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(EncoderLayer::tensors).collect()
    }

    /// Sinusoidal position code for `rows` positions.
    pub fn positions(&self, rows: usize) -> Tensor<T> {
        let d = self.config.d;
        let mut pe = vec![T::zero(); rows * d];
        for t in 0..rows {
            for i in 0..d / 2 {
                let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
                pe[t * d + 2 * i] = T::from_f64_lossy(angle.sin());
                pe[t * d + 2 * i + 1] = T::from_f64_lossy(angle.cos());
            }
        }
        Tensor::new(&[rows, d], pe).expect("shape matches data")
    }

    /// Runs every layer and keeps `(Z_k, E_k)` for each.
    pub fn encode_layers<R: Rng + ?Sized>(
        &self,
        features: &Tensor<T>,
        prompts: &PromptSet<T>,
        ctx: &mut PromptContext<'_, T, R>,
    ) -> Result<Vec<LayerOutput<T>>> {
        let (rows, d) = features.dims2()?;
        if d != self.config.d {
            return invalid(format!("features have width {d}, encoder expects {}", self.config.d));
        }
        if prompts.len() != self.layers.len() || prompts.d() != d {
            return invalid(format!(
                "prompt set has {} layers of width {}, encoder has {} of width {d}",
                prompts.len(),
                prompts.d(),
                self.layers.len()
            ));
        }
        let p = prompts.p();
        let mut sequence = features.add(&self.positions(rows))?;
        let mut outputs = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let prompt = prompts.processed(k, ctx.bank, ctx.sparsify, ctx.path, ctx.mode, ctx.rng)?;
            let out = layer.forward(&Tensor::concat(&[prompt, sequence], 0)?)?;
            let z = out.slice(0, 0, p)?;
            sequence = out.slice(0, p, rows)?;
            outputs.push(LayerOutput { prompt: z, sequence: sequence.clone() });
        }
        Ok(outputs)
    }

    /// `I = [Z_l, E_l]`, shape `(p + T) × d`.
    pub fn encode_with_prompts<R: Rng + ?Sized>(
        &self,
        features: &Tensor<T>,
        prompts: &PromptSet<T>,
        ctx: &mut PromptContext<'_, T, R>,
    ) -> Result<Tensor<T>> {
        let last = self.encode_layers(features, prompts, ctx)?.pop().expect("at least one layer");
        Tensor::concat(&[last.prompt, last.sequence], 0)
    }
}
