use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::{lwd, lwr, wds, FilterBank, SparsifyConfig};
use crate::autodiff::{DftPart, Tensor};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::Mode;

/// How prompt tokens are enriched before entering a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptVariant {
    /// Plain prompt tuning.
    Pt,
    /// Real part of the 2-D DFT of the prompt.
    FourierPt,
    /// Wavelet round trip on all tokens, no sparsification.
    Wpt,
    /// Wavelet round trip with sparsification on all tokens.
    Wspt,
    /// Wavelet round trip with sparsification on the last `m` tokens.
    PartialWspt,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 5] = [Self::Pt, Self::FourierPt, Self::Wpt, Self::Wspt, Self::PartialWspt];

    pub fn uses_wavelets(self) -> bool {
        matches!(self, Self::Wpt | Self::Wspt | Self::PartialWspt)
    }

    /// Number of wavelet-enhanced tokens for `p` prompts, given the requested `m`.
    pub fn enhanced_tokens(self, p: usize, m: usize) -> usize {
        match self {
            Self::Pt | Self::FourierPt => 0,
            Self::Wpt | Self::Wspt => p,
            Self::PartialWspt => m,
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pt => "PT",
            Self::FourierPt => "FourierPT",
            Self::Wpt => "WPT",
            Self::Wspt => "WSPT",
            Self::PartialWspt => "PartialWSPT",
        })
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown prompt variant `{s}`")))
    }
}

/// Stage switches for the wavelet path, used by the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptPath {
    /// Learnable decomposition; when off the raw tokens are sparsified as a
    /// single band and used directly.
    pub decompose: bool,
    /// Learnable reconstruction; when off the sparsified bands are stacked
    /// side by side (`[approx | detail]`) as the enhanced token.
    pub reconstruct: bool,
}

impl Default for PromptPath {
    fn default() -> Self {
        Self { decompose: true, reconstruct: true }
    }
}

/// Per-layer learnable prompt tokens.
#[derive(Debug, Clone)]
pub struct PromptSet<T: Scalar> {
    pub layers: Vec<Tensor<T>>,
    p: usize,
    m: usize,
    variant: PromptVariant,
}

impl<T: Scalar> PromptSet<T> {
    /// Xavier-uniform initialised prompts for `layers` layers of width `d`.
    pub fn new<R: Rng + ?Sized>(
        variant: PromptVariant,
        layers: usize,
        p: usize,
        m: usize,
        d: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = (6.0 / (p + d) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mats = (0..layers)
            .map(|_| {
                let data = (0..p * d).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
                Tensor::param(&[p, d], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(variant, mats, m)
    }

    pub fn from_layers(variant: PromptVariant, layers: Vec<Tensor<T>>, m: usize) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::InvalidArgument("prompt set needs at least one layer".into()))?;
        let (p, d) = first.dims2()?;
        if layers.iter().any(|l| l.shape() != [p, d]) {
            return invalid("every layer prompt must share one p×d shape");
        }
        if variant == PromptVariant::PartialWspt && !(0 < m && m < p) {
            return invalid(format!("PartialWSPT needs 0 < m < p, got m={m}, p={p}"));
        }
        let m = variant.enhanced_tokens(p, m);
        Ok(Self { layers, p, m, variant })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.layers[0].shape()[1]
    }

    pub fn variant(&self) -> PromptVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Prompt rows injected at layer `k` (0-based) for the active variant.
    pub fn processed<R: Rng + ?Sized>(
        &self,
        k: usize,
        bank: &FilterBank<T>,
        sparsify: &SparsifyConfig,
        path: PromptPath,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let prompt = self
            .layers
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no prompt for layer {k}")))?;
        match self.variant {
            PromptVariant::Pt => Ok(prompt.clone()),
            PromptVariant::FourierPt => fourier_prompt(prompt),
            PromptVariant::Wpt | PromptVariant::Wspt | PromptVariant::PartialWspt => {
                let sparsify = if self.variant == PromptVariant::Wpt {
                    SparsifyConfig::disabled()
                } else {
                    *sparsify
                };
                let tail = prompt.slice(0, self.p - self.m, self.m)?;
                let wsp = wavelet_sparse_prompt(&tail, bank, &sparsify, path, mode, rng)?;
                assemble_prompt(prompt, Some(&wsp))
            }
        }
    }
}

/// Decompose, sparsify, and reconstruct a block of prompt tokens.
pub fn wavelet_sparse_prompt<T: Scalar, R: Rng + ?Sized>(
    tokens: &Tensor<T>,
    bank: &FilterBank<T>,
    sparsify: &SparsifyConfig,
    path: PromptPath,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if !path.decompose {
        let (m, d) = tokens.dims2()?;
        // Single-band path: split the raw row into halves only to reuse the
        // two-band sparsifier, then rejoin.
        let half = d / 2;
        if half == 0 || d % 2 != 0 {
            return invalid(format!("hidden dimension {d} must be even"));
        }
        let s = wds(&tokens.slice(1, 0, half)?, &tokens.slice(1, half, half)?, sparsify, mode, rng)?;
        let out = Tensor::concat(&[s.approx, s.detail], 1)?;
        debug_assert_eq!(out.shape(), [m, d]);
        return Ok(out);
    }
    let (approx, detail) = lwd(tokens, bank)?;
    let s = wds(&approx, &detail, sparsify, mode, rng)?;
    if path.reconstruct {
        lwr(&s.approx, &s.detail, bank)
    } else {
        Tensor::concat(&[s.approx, s.detail], 1)
    }
}

/// Keeps the first `p - m` prompt rows and replaces the last `m` with the
/// enhanced tokens. `None` means `m = 0`.
pub fn assemble_prompt<T: Scalar>(prompt: &Tensor<T>, enhanced: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (p, d) = prompt.dims2()?;
    let Some(wsp) = enhanced else {
        return Ok(prompt.clone());
    };
    let (m, dw) = wsp.dims2()?;
    if m > p || dw != d {
        return invalid(format!("cannot place {m}x{dw} enhanced tokens into a {p}x{d} prompt"));
    }
    if m == p {
        return Ok(wsp.clone());
    }
    Tensor::concat(&[prompt.slice(0, 0, p - m)?, wsp.clone()], 0)
}

/// Real part of the 2-D DFT of a `p × d` prompt (token axis, then hidden axis).
pub fn fourier_prompt<T: Scalar>(prompt: &Tensor<T>) -> Result<Tensor<T>> {
    prompt.dims2()?;
    // Re(F_p X F_d) = Re_d(Re_p X) - Im_d(Im_p X) for real X.
    let re = prompt.dft(0, DftPart::Real)?.dft(1, DftPart::Real)?;
    let im = prompt.dft(0, DftPart::Imag)?.dft(1, DftPart::Imag)?;
    re.sub(&im)
}
