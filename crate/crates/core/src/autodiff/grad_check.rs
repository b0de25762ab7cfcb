use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Compares tape gradients against central finite differences.
///
/// By default every entry of every parameter is probed. Large models can
/// limit the probe to a seeded subset per tensor with [`GradCheck::sample`].
#[derive(Debug, Clone)]
pub struct GradCheck {
    eps: f64,
    sample: Option<(usize, u64)>,
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

impl GradCheck {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1e-2) {
            return invalid(format!("finite-difference step {eps} outside (0, 1e-2]"));
        }
        Ok(Self { eps, sample: None })
    }

    /// Probe at most `per_tensor` entries of each parameter, chosen with `seed`.
    pub fn sample(mut self, per_tensor: usize, seed: u64) -> Self {
        self.sample = Some((per_tensor, seed));
        self
    }

    pub fn run<T, F>(&self, f: F, params: &[Tensor<T>]) -> Result<GradCheckReport>
    where
        T: Scalar,
        F: Fn() -> Result<Tensor<T>>,
    {
        for p in params {
            p.zero_grad();
        }
        let loss = f()?;
        ensure_finite(loss.item()?.as_f64(), "loss")?;
        loss.backward()?;
        drop(loss);

        let eps = T::from_f64_lossy(self.eps);
        let mut rng = self.sample.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (pi, p) in params.iter().enumerate() {
            let analytic = p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]);
            let indices: Vec<usize> = match (&self.sample, rng.as_mut()) {
                (Some((k, _)), Some(rng)) if *k < p.numel() => {
                    let mut idx = sample(rng, p.numel(), *k).into_vec();
                    idx.sort_unstable();
                    idx
                }
                _ => (0..p.numel()).collect(),
            };
            for i in indices {
                let original = p.data()[i];
                p.data_mut()[i] = original + eps;
                let plus = f().map(|l| l.item());
                p.data_mut()[i] = original - eps;
                let minus = f().map(|l| l.item());
                p.data_mut()[i] = original;
                let (plus, minus) = (plus??.as_f64(), minus??.as_f64());
                let numeric = (plus - minus) / (2.0 * self.eps);
                let a = analytic[i].as_f64();
                ensure_finite(numeric, &format!("numeric gradient of param {pi}[{i}]"))?;
                ensure_finite(a, &format!("analytic gradient of param {pi}[{i}]"))?;
                let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
                worst = worst.max(rel);
                checked += 1;
            }
        }
        for p in params {
            p.zero_grad();
        }
        Ok(GradCheckReport { max_rel_error: worst, entries_checked: checked })
    }
}

fn ensure_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericInstability(format!("{what} is {v}")))
    }
}

/// Maximum relative error between tape and central-difference gradients of
/// `f` over every entry of `params`.
pub fn grad_check<T, F>(f: F, params: &[Tensor<T>], eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn() -> Result<Tensor<T>>,
{
    Ok(GradCheck::new(eps)?.run(f, params)?.max_rel_error)
}
