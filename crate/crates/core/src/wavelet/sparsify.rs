use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::Mode;

/// Wavelet-domain sparsification settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsifyConfig {
    /// Fraction of coefficient positions that receive gradient per step.
    pub rho: f64,
    pub enabled: bool,
}

impl SparsifyConfig {
    pub fn new(rho: f64, enabled: bool) -> Result<Self> {
        let cfg = Self { rho, enabled };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn disabled() -> Self {
        Self { rho: 1.0, enabled: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return invalid(format!("sparsity ratio {} outside [0, 1]", self.rho));
        }
        Ok(())
    }
}

/// Output of [`wds`].
#[derive(Debug, Clone)]
pub struct Sparsified<T: Scalar> {
    pub approx: Tensor<T>,
    pub detail: Tensor<T>,
    /// Selection over the stacked `[approx | detail]` positions, row-major
    /// `m × (approx cols + detail cols)`.
    pub mask: Vec<bool>,
}

/// Stochastic gradient sparsification of stacked wavelet coefficients.
///
/// In training with sparsification enabled a Bernoulli(`rho`) mask is drawn
/// over the stacked positions; selected entries keep their tape connection,
/// the rest are forwarded unchanged but gradient-stopped. Otherwise the
/// inputs pass through untouched with an all-ones mask.
pub fn wds<T: Scalar, R: Rng + ?Sized>(
    approx: &Tensor<T>,
    detail: &Tensor<T>,
    cfg: &SparsifyConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Sparsified<T>> {
    cfg.validate()?;
    let (rows, ca) = approx.dims2()?;
    let (rows_d, cd) = detail.dims2()?;
    if rows != rows_d {
        return invalid(format!("bands have {rows} and {rows_d} rows"));
    }
    let width = ca + cd;
    if mode == Mode::Eval || !cfg.enabled {
        return Ok(Sparsified {
            approx: approx.clone(),
            detail: detail.clone(),
            mask: vec![true; rows * width],
        });
    }
    let mask: Vec<bool> = (0..rows * width).map(|_| rng.gen::<f64>() < cfg.rho).collect();
    let (mut mask_a, mut mask_d) = (Vec::with_capacity(rows * ca), Vec::with_capacity(rows * cd));
    for row in mask.chunks(width) {
        mask_a.extend_from_slice(&row[..ca]);
        mask_d.extend_from_slice(&row[ca..]);
    }
    Ok(Sparsified { approx: approx.grad_gate(&mask_a)?, detail: detail.grad_gate(&mask_d)?, mask })
}
