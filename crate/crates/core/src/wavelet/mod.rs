//! Learnable single-level wavelet filter banks for prompt tokens.
//!
//! Tokens are transformed along the hidden dimension, one token per row,
//! with periodic boundary extension. Analysis is a stride-2 periodic
//! correlation with `f0`/`f1`; synthesis is its transpose with `h0`/`h1`, so
//! an orthogonal bank with `h = f` reconstructs exactly.

mod prompt;
mod sparsify;

use std::fmt;
use std::str::FromStr;

pub use prompt::{
    assemble_prompt, fourier_prompt, wavelet_sparse_prompt, PromptPath, PromptSet, PromptVariant,
};
pub use sparsify::{wds, SparsifyConfig, Sparsified};

use crate::autodiff::Tensor;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Library wavelet used to initialise a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    Haar,
    /// Daubechies with two vanishing moments (4 taps).
    Db2,
}

impl WaveletFamily {
    /// Orthonormal low-pass analysis taps.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            Self::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            Self::Db2 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm]
            }
        }
    }

    /// Quadrature-mirror high-pass: `g[j] = (-1)^j h[L-1-j]`.
    pub fn highpass(self) -> Vec<f64> {
        let low = self.lowpass();
        let l = low.len();
        (0..l).map(|j| if j % 2 == 0 { low[l - 1 - j] } else { -low[l - 1 - j] }).collect()
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Haar => "haar",
            Self::Db2 => "db2",
        })
    }
}

impl FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Self::Haar),
            "db2" => Ok(Self::Db2),
            other => Err(Error::InvalidArgument(format!("unknown wavelet family `{other}`"))),
        }
    }
}

/// Analysis (`f0`, `f1`) and synthesis (`h0`, `h1`) filters of equal even length.
#[derive(Debug, Clone)]
pub struct FilterBank<T: Scalar> {
    pub f0: Tensor<T>,
    pub f1: Tensor<T>,
    pub h0: Tensor<T>,
    pub h1: Tensor<T>,
    learnable: bool,
}

impl<T: Scalar> FilterBank<T> {
    /// Orthogonal bank initialised from a library wavelet, synthesis = analysis.
    pub fn new(family: WaveletFamily, learnable: bool) -> Self {
        let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64_lossy).collect::<Vec<_>>();
        let (low, high) = (cast(family.lowpass()), cast(family.highpass()));
        Self::from_coefficients(low.clone(), high.clone(), low, high, learnable)
            .expect("library wavelets are well formed")
    }

    pub fn from_coefficients(f0: Vec<T>, f1: Vec<T>, h0: Vec<T>, h1: Vec<T>, learnable: bool) -> Result<Self> {
        let l = f0.len();
        if l < 2 || l % 2 != 0 {
            return invalid(format!("filter length {l} must be even and at least 2"));
        }
        if [f1.len(), h0.len(), h1.len()].iter().any(|&n| n != l) {
            return invalid("all four filters must share one length");
        }
        let mk = |v: Vec<T>| Tensor::leaf(&[l], v, learnable);
        Ok(Self { f0: mk(f0)?, f1: mk(f1)?, h0: mk(h0)?, h1: mk(h1)?, learnable })
    }

    pub fn filter_len(&self) -> usize {
        self.f0.numel()
    }

    pub fn is_learnable(&self) -> bool {
        self.learnable
    }

    /// The four filters in `f0, f1, h0, h1` order.
    pub fn tensors(&self) -> [&Tensor<T>; 4] {
        [&self.f0, &self.f1, &self.h0, &self.h1]
    }

    /// Optimisable tensors; empty for a fixed bank.
    pub fn parameters(&self) -> Vec<Tensor<T>> {
        if self.learnable {
            self.tensors().into_iter().cloned().collect()
        } else {
            Vec::new()
        }
    }

    /// Deep copy with fresh storage.
    pub fn duplicate(&self) -> Self {
        Self::from_coefficients(
            self.f0.to_vec(),
            self.f1.to_vec(),
            self.h0.to_vec(),
            self.h1.to_vec(),
            self.learnable,
        )
        .expect("copy of a valid bank")
    }
}

/// Learnable wavelet decomposition of each token row into approximation and
/// detail coefficients, each `m × d/2`.
pub fn lwd<T: Scalar>(tokens: &Tensor<T>, bank: &FilterBank<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, d) = tokens.dims2()?;
    if d % 2 != 0 {
        return invalid(format!("hidden dimension {d} must be even for a two-band split"));
    }
    Ok((tokens.conv_down(&bank.f0, 2)?, tokens.conv_down(&bank.f1, 2)?))
}

/// Learnable wavelet reconstruction: upsample each band, filter, and sum.
pub fn lwr<T: Scalar>(approx: &Tensor<T>, detail: &Tensor<T>, bank: &FilterBank<T>) -> Result<Tensor<T>> {
    if approx.shape() != detail.shape() {
        return invalid(format!(
            "approximation {:?} and detail {:?} bands differ",
            approx.shape(),
            detail.shape()
        ));
    }
    approx.conv_up(&bank.h0, 2)?.add(&detail.conv_up(&bank.h1, 2)?)
}

pub const DEFAULT_PR_PROBE: usize = 8;

/// Perfect-reconstruction penalty: squared round-trip error summed over the
/// canonical basis of length `probe`. Zero iff the bank inverts itself there.
pub fn pr_penalty<T: Scalar>(bank: &FilterBank<T>, probe: usize) -> Result<Tensor<T>> {
    let mut eye = vec![T::zero(); probe * probe];
    for i in 0..probe {
        eye[i * probe + i] = T::one();
    }
    let basis = Tensor::new(&[probe, probe], eye)?;
    let (a, d) = lwd(&basis, bank)?;
    let diff = lwr(&a, &d, bank)?.sub(&basis)?;
    Ok(diff.mul(&diff)?.sum())
}
