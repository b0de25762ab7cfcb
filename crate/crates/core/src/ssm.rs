//! Bidirectional selective state-space classifier.
//!
//! A simplified diagonal selective SSM with zero-order-hold discretisation:
//! per channel `c` and state `s`,
//!
//! ```text
//! h_t[c,s] = exp(Δ_t[c] A[c,s]) h_{t-1}[c,s] + Δ_t[c] B_t[s] u_t[c]
//! y_t[c]   = Σ_s C_t[s] h_t[c,s] + D[c] u_t[c]
//! ```
//!
//! with `Δ_t = softplus(u_t W_Δ + b_Δ)`, `B_t = u_t W_B`, `C_t = u_t W_C`.

use std::cell::Cell;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::autodiff::{OpKind, Tensor};
use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::Mode;

thread_local! {
    static SCAN_UPDATES: Cell<u64> = const { Cell::new(0) };
}

/// State updates performed by [`scan_core`] on this thread (`T·d·d_state`
/// per forward call).
pub fn scan_update_count() -> u64 {
    SCAN_UPDATES.with(Cell::get)
}

pub fn reset_scan_update_count() {
    SCAN_UPDATES.with(|c| c.set(0));
}

fn uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..shape.iter().product::<usize>()).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
    Tensor::param(shape, data).expect("shape matches data")
}

fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
}

fn filled<T: Scalar>(shape: &[usize], v: f64) -> Tensor<T> {
    Tensor::param(shape, vec![T::from_f64_lossy(v); shape.iter().product()]).expect("shape matches data")
}

/// The recurrence itself as one tape op with a hand-written adjoint.
///
/// Shapes: `u, delta: T×d`, `a: d×n`, `b, c: T×n`, `skip: d`.
pub fn scan_core<T: Scalar>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    skip: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (steps, d) = u.dims2()?;
    let (_, n) = a.dims2()?;
    if delta.shape() != [steps, d] || a.shape() != [d, n] || b.shape() != [steps, n] || c.shape() != [steps, n] || skip.shape() != [d] {
        return shape_err(format!(
            "scan shapes u {:?}, delta {:?}, A {:?}, B {:?}, C {:?}, D {:?}",
            u.shape(),
            delta.shape(),
            a.shape(),
            b.shape(),
            c.shape(),
            skip.shape()
        ));
    }
    let mut states = vec![T::zero(); steps * d * n];
    let mut y = vec![T::zero(); steps * d];
    {
        let (uv, dv, av, bv, cv, sv) = (u.data(), delta.data(), a.data(), b.data(), c.data(), skip.data());
        for t in 0..steps {
            for ch in 0..d {
                let (dt, x) = (dv[t * d + ch], uv[t * d + ch]);
                let mut acc = T::zero();
                for s in 0..n {
                    let decay = (dt * av[ch * n + s]).exp();
                    let prev = if t > 0 { states[((t - 1) * d + ch) * n + s] } else { T::zero() };
                    let h = decay * prev + dt * bv[t * n + s] * x;
                    states[(t * d + ch) * n + s] = h;
                    acc += cv[t * n + s] * h;
                }
                y[t * d + ch] = acc + sv[ch] * x;
            }
        }
    }
    SCAN_UPDATES.with(|cnt| cnt.set(cnt.get() + (steps * d * n) as u64));
    Ok(Tensor::from_op(
        OpKind::SelectiveScan,
        vec![steps, d],
        y,
        vec![u.clone(), delta.clone(), a.clone(), b.clone(), c.clone(), skip.clone()],
        Box::new(move |args| {
            let p = args.parents;
            let (uv, dv, av, bv, cv, sv) = (p[0].data(), p[1].data(), p[2].data(), p[3].data(), p[4].data(), p[5].data());
            let gy = args.grad;
            let mut du = vec![T::zero(); steps * d];
            let mut ddelta = vec![T::zero(); steps * d];
            let mut da = vec![T::zero(); d * n];
            let mut db = vec![T::zero(); steps * n];
            let mut dc = vec![T::zero(); steps * n];
            let mut dskip = vec![T::zero(); d];
            let mut carry = vec![T::zero(); d * n];
            for t in (0..steps).rev() {
                for ch in 0..d {
                    let i = t * d + ch;
                    let (g, x, dt) = (gy[i], uv[i], dv[i]);
                    dskip[ch] += g * x;
                    du[i] += g * sv[ch];
                    for s in 0..n {
                        let h = states[i * n + s];
                        dc[t * n + s] += g * h;
                        let dh = carry[ch * n + s] + g * cv[t * n + s];
                        let decay = (dt * av[ch * n + s]).exp();
                        let prev = if t > 0 { states[((t - 1) * d + ch) * n + s] } else { T::zero() };
                        let ddecay = dh * prev * decay;
                        ddelta[i] += ddecay * av[ch * n + s] + dh * bv[t * n + s] * x;
                        da[ch * n + s] += ddecay * dt;
                        db[t * n + s] += dh * dt * x;
                        du[i] += dh * dt * bv[t * n + s];
                        carry[ch * n + s] = dh * decay;
                    }
                }
            }
            vec![Some(du), Some(ddelta), Some(da), Some(db), Some(dc), Some(dskip)]
        }),
    ))
}

/// Parameters of one scan direction.
#[derive(Debug, Clone)]
pub struct SsmParams<T: Scalar> {
    /// `A = -exp(a_log)`, so the state matrix stays strictly negative.
    pub a_log: Tensor<T>,
    pub w_b: Tensor<T>,
    pub w_c: Tensor<T>,
    pub w_delta: Tensor<T>,
    pub b_delta: Tensor<T>,
    pub skip: Tensor<T>,
}

impl<T: Scalar> SsmParams<T> {
    pub fn new<R: Rng + ?Sized>(d: usize, d_state: usize, rng: &mut R) -> Self {
        // A[c, s] = -(s + 1); step sizes start log-uniform in [1e-3, 1e-1].
        let a_log = (0..d).flat_map(|_| (0..d_state).map(|s| T::from_f64_lossy(((s + 1) as f64).ln()))).collect();
        let dt_dist = Uniform::new(1e-3f64.ln(), 1e-1f64.ln());
        let b_delta = (0..d)
            .map(|_| {
                let dt = dt_dist.sample(rng).exp();
                T::from_f64_lossy(dt + (-(-dt).exp_m1()).ln())
            })
            .collect();
        Self {
            a_log: Tensor::param(&[d, d_state], a_log).expect("shape matches data"),
            w_b: glorot(d, d_state, rng),
            w_c: glorot(d, d_state, rng),
            w_delta: uniform(&[d, d], 1.0 / (d as f64).sqrt() * 0.1, rng),
            b_delta: Tensor::param(&[d], b_delta).expect("shape matches data"),
            skip: filled(&[d], 1.0),
        }
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        vec![
            self.a_log.clone(),
            self.w_b.clone(),
            self.w_c.clone(),
            self.w_delta.clone(),
            self.b_delta.clone(),
            self.skip.clone(),
        ]
    }

    pub fn state_matrix(&self) -> Tensor<T> {
        self.a_log.exp().neg()
    }

    pub fn duplicate(&self) -> Self {
        let copy = |t: &Tensor<T>| Tensor::param(t.shape(), t.to_vec()).expect("copy");
        Self {
            a_log: copy(&self.a_log),
            w_b: copy(&self.w_b),
            w_c: copy(&self.w_c),
            w_delta: copy(&self.w_delta),
            b_delta: copy(&self.b_delta),
            skip: copy(&self.skip),
        }
    }
}

/// Selective scan over a `T × d` sequence with input-dependent `Δ`, `B`, `C`.
pub fn selective_scan<T: Scalar>(u: &Tensor<T>, params: &SsmParams<T>) -> Result<Tensor<T>> {
    let (steps, _) = u.dims2()?;
    if steps == 0 {
        return invalid("selective scan over an empty sequence");
    }
    let delta = u.matmul(&params.w_delta)?.add_row(&params.b_delta)?.softplus();
    let b = u.matmul(&params.w_b)?;
    let c = u.matmul(&params.w_c)?;
    scan_core(u, &delta, &params.state_matrix(), &b, &c, &params.skip)
}

/// Pre-norm bidirectional block with gated scans and a residual connection.
#[derive(Debug, Clone)]
pub struct BidirectionalBlock<T: Scalar> {
    pub norm: (Tensor<T>, Tensor<T>),
    pub w_in: Tensor<T>,
    pub b_in: Tensor<T>,
    pub w_gate: Tensor<T>,
    pub b_gate: Tensor<T>,
    pub forward: SsmParams<T>,
    pub backward: SsmParams<T>,
    pub w_out: Tensor<T>,
    pub b_out: Tensor<T>,
}

impl<T: Scalar> BidirectionalBlock<T> {
    pub fn new<R: Rng + ?Sized>(d: usize, d_state: usize, rng: &mut R) -> Self {
        Self {
            norm: (filled(&[d], 1.0), filled(&[d], 0.0)),
            w_in: glorot(d, d, rng),
            b_in: filled(&[d], 0.0),
            w_gate: glorot(d, d, rng),
            b_gate: filled(&[d], 0.0),
            forward: SsmParams::new(d, d_state, rng),
            backward: SsmParams::new(d, d_state, rng),
            w_out: glorot(d, d, rng),
            b_out: filled(&[d], 0.0),
        }
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        let mut out = vec![
            self.norm.0.clone(),
            self.norm.1.clone(),
            self.w_in.clone(),
            self.b_in.clone(),
            self.w_gate.clone(),
            self.b_gate.clone(),
        ];
        out.extend(self.forward.tensors());
        out.extend(self.backward.tensors());
        out.push(self.w_out.clone());
        out.push(self.b_out.clone());
        out
    }

    /// `u + W_out(gate ⊙ scan_fwd(x) + reverse(gate' ⊙ scan_bwd(reverse(x))))`
    /// where `x = LN(u) W_in` and `gate = silu(LN(u) W_gate)`.
    pub fn forward<R: Rng + ?Sized>(&self, u: &Tensor<T>, dropout: f64, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        let h = u.layer_norm(&self.norm.0, &self.norm.1, T::from_f64_lossy(1e-5))?;
        let x = h.matmul(&self.w_in)?.add_row(&self.b_in)?;
        let gate = h.matmul(&self.w_gate)?.add_row(&self.b_gate)?.silu();
        let fwd = selective_scan(&x, &self.forward)?.mul(&gate)?;
        let bwd = selective_scan(&x.flip(0)?, &self.backward)?.mul(&gate.flip(0)?)?.flip(0)?;
        let mixed = fwd.add(&bwd)?.matmul(&self.w_out)?.add_row(&self.b_out)?;
        u.add(&mixed.dropout(dropout, rng, mode == Mode::Train)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub blocks: usize,
    pub d_state: usize,
    /// Width of the blocks; the encoder output is projected to it.
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { blocks: 4, d_state: 8, hidden: 64, dropout: 0.1 }
    }
}

pub const CLASSES: usize = 2;

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.d_state == 0 || self.hidden == 0 {
            return invalid("classifier needs positive blocks, d_state and hidden width");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Closed-form parameter count for input width `d_in`.
    pub fn param_count(&self, d_in: usize) -> usize {
        let (h, n) = (self.hidden, self.d_state);
        let direction = 3 * h * n + h * h + 2 * h;
        let block = 2 * h + 3 * (h * h + h) + 2 * direction;
        (d_in * h + h) + self.blocks * block + 2 * h + (h * CLASSES + CLASSES)
    }
}

/// Logits plus the pooled representation they were computed from.
#[derive(Debug, Clone)]
pub struct ClassifierOutput<T: Scalar> {
    pub logits: Tensor<T>,
    pub pooled: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Classifier<T: Scalar> {
    config: ClassifierConfig,
    pub w_proj: Tensor<T>,
    pub b_proj: Tensor<T>,
    pub blocks: Vec<BidirectionalBlock<T>>,
    pub norm: (Tensor<T>, Tensor<T>),
    pub w_head: Tensor<T>,
    pub b_head: Tensor<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new<R: Rng + ?Sized>(config: ClassifierConfig, d_in: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        Ok(Self {
            config,
            w_proj: glorot(d_in, h, rng),
            b_proj: filled(&[h], 0.0),
            blocks: (0..config.blocks).map(|_| BidirectionalBlock::new(h, config.d_state, rng)).collect(),
            norm: (filled(&[h], 1.0), filled(&[h], 0.0)),
            w_head: glorot(h, CLASSES, rng),
            b_head: filled(&[CLASSES], 0.0),
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        let mut out = vec![self.w_proj.clone(), self.b_proj.clone()];
        out.extend(self.blocks.iter().flat_map(BidirectionalBlock::tensors));
        out.extend([self.norm.0.clone(), self.norm.1.clone(), self.w_head.clone(), self.b_head.clone()]);
        out
    }

    /// Blocks → final norm → mean over rows → linear head.
    pub fn forward<R: Rng + ?Sized>(&self, input: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<ClassifierOutput<T>> {
        let mut x = input.matmul(&self.w_proj)?.add_row(&self.b_proj)?;
        for block in &self.blocks {
            x = block.forward(&x, self.config.dropout, mode, rng)?;
        }
        let pooled = x.layer_norm(&self.norm.0, &self.norm.1, T::from_f64_lossy(1e-5))?.mean_rows()?;
        let h = self.config.hidden;
        let logits = pooled
            .dropout(self.config.dropout, rng, mode == Mode::Train)?
            .reshape(&[1, h])?
            .matmul(&self.w_head)?
            .add_row(&self.b_head)?;
        Ok(ClassifierOutput { logits, pooled })
    }
}

/// Detection score: bonafide logit minus spoof logit.
pub fn score<T: Scalar>(logits: &Tensor<T>) -> Result<T> {
    let v = logits.data();
    if v.len() != CLASSES {
        return shape_err(format!("expected {CLASSES} logits, got {}", v.len()));
    }
    Ok(v[0] - v[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn degenerate_recurrence_is_prefix_sum() {
        let u = Tensor::<f64>::new(&[5, 2], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0, 2.0, 2.0, -4.0, 1.0]).unwrap();
        let ones_t = Tensor::full(&[5, 1], 1.0);
        let y = scan_core(
            &u,
            &Tensor::full(&[5, 2], 1.0),
            &Tensor::zeros(&[2, 1]),
            &ones_t,
            &ones_t,
            &Tensor::zeros(&[2]),
        )
        .unwrap()
        .to_vec();
        let uv = u.to_vec();
        let mut sums = [0.0; 2];
        for t in 0..5 {
            for c in 0..2 {
                sums[c] += uv[t * 2 + c];
                assert_eq!(y[t * 2 + c], sums[c]);
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(Tensor::<f64>::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn state_matrix_is_negative() {
        let p = SsmParams::<f64>::new(6, 4, &mut rng::stream(0, "ssm"));
        assert!(p.state_matrix().to_vec().iter().all(|&a| a < 0.0));
    }

    #[test]
    fn zeroed_head_emits_bias() {
        let cfg = ClassifierConfig { blocks: 1, d_state: 2, hidden: 4, dropout: 0.0 };
        let clf = Classifier::<f64>::new(cfg, 6, &mut rng::stream(0, "clf")).unwrap();
        clf.w_head.data_mut().iter_mut().for_each(|v| *v = 0.0);
        clf.b_head.data_mut().copy_from_slice(&[0.25, -0.5]);
        let mut r = rng::stream(0, "x");
        for seed in 0..3 {
            let x = Tensor::new(&[5, 6], (0..30).map(|i| ((i + seed * 7) as f64).sin()).collect()).unwrap();
            let out = clf.forward(&x, Mode::Eval, &mut r).unwrap();
            assert_eq!(out.logits.to_vec(), vec![0.25, -0.5]);
        }
    }

    #[test]
    fn param_formula_matches_tensors() {
        let cfg = ClassifierConfig { blocks: 3, d_state: 5, hidden: 12, dropout: 0.1 };
        let clf = Classifier::<f64>::new(cfg, 20, &mut rng::stream(0, "clf")).unwrap();
        let n: usize = clf.tensors().iter().map(Tensor::numel).sum();
        assert_eq!(n, cfg.param_count(20));
    }
}
