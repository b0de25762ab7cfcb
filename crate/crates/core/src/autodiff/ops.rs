//! Differentiable tensor operations.

use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::tensor::{numel, BackwardArgs, OpKind, Tensor};
use crate::error::{invalid, shape_err, Result};
use crate::scalar::{gemm, Scalar};

/// Which component of a complex DFT result to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftPart {
    Real,
    Imag,
}

/// Splits a shape around `axis` into `(outer, len, inner)`.
fn around_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return invalid(format!("axis {axis} out of range for shape {shape:?}"));
    }
    Ok(())
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("tensors have rank >= 1")
}

impl<T: Scalar> Tensor<T> {
    fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return shape_err(format!("{what}: {:?} vs {:?}", self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Elementwise map with derivative expressed through input and output.
    fn map_unary(
        &self,
        op: OpKind,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        let data: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        Self::from_op(
            op,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a: &BackwardArgs<'_, T>| {
                let x = a.parents[0].data();
                let g = a.grad.iter().zip(x.iter()).zip(a.output).map(|((&g, &x), &y)| g * df(x, y));
                vec![Some(g.collect())]
            }),
        )
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return shape_err(format!("matmul inner dims {m}x{k} · {k2}x{n}"));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(false, false, m, k, n, &self.data(), &rhs.data(), &mut out, false);
        Ok(Self::from_op(
            OpKind::MatMul,
            vec![m, n],
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |a| {
                let (lhs, rhs) = (&a.parents[0], &a.parents[1]);
                let da = lhs.requires_grad().then(|| {
                    let mut da = vec![T::zero(); m * k];
                    gemm(false, true, m, n, k, a.grad, &rhs.data(), &mut da, false);
                    da
                });
                let db = rhs.requires_grad().then(|| {
                    let mut db = vec![T::zero(); k * n];
                    gemm(true, false, k, m, n, &lhs.data(), a.grad, &mut db, false);
                    db
                });
                vec![da, db]
            }),
        ))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "add")?;
        let data = self.data().iter().zip(rhs.data().iter()).map(|(&x, &y)| x + y).collect();
        Ok(Self::from_op(
            OpKind::Add,
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|a| vec![Some(a.grad.to_vec()), Some(a.grad.to_vec())]),
        ))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "sub")?;
        let data = self.data().iter().zip(rhs.data().iter()).map(|(&x, &y)| x - y).collect();
        Ok(Self::from_op(
            OpKind::Sub,
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|a| vec![Some(a.grad.to_vec()), Some(a.grad.iter().map(|&g| -g).collect())]),
        ))
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "mul")?;
        let data = self.data().iter().zip(rhs.data().iter()).map(|(&x, &y)| x * y).collect();
        Ok(Self::from_op(
            OpKind::Mul,
            self.shape().to_vec(),
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(|a| {
                let (x, y) = (a.parents[0].data(), a.parents[1].data());
                let dx = a.grad.iter().zip(y.iter()).map(|(&g, &y)| g * y).collect();
                let dy = a.grad.iter().zip(x.iter()).map(|(&g, &x)| g * x).collect();
                vec![Some(dx), Some(dy)]
            }),
        ))
    }

    /// Adds a vector along the last axis (bias broadcast over rows).
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let d = last_dim(self.shape());
        if row.shape() != [d] {
            return shape_err(format!("add_row: {:?} + {:?}", self.shape(), row.shape()));
        }
        let r = row.data();
        let data = self.data().chunks(d).flat_map(|c| c.iter().zip(r.iter()).map(|(&x, &b)| x + b)).collect();
        drop(r);
        Ok(Self::from_op(
            OpKind::AddRow,
            self.shape().to_vec(),
            data,
            vec![self.clone(), row.clone()],
            Box::new(move |a| {
                let mut db = vec![T::zero(); d];
                for chunk in a.grad.chunks(d) {
                    db.iter_mut().zip(chunk).for_each(|(s, &g)| *s += g);
                }
                vec![Some(a.grad.to_vec()), Some(db)]
            }),
        ))
    }

    /// Multiplies by a vector along the last axis.
    pub fn mul_row(&self, row: &Self) -> Result<Self> {
        let d = last_dim(self.shape());
        if row.shape() != [d] {
            return shape_err(format!("mul_row: {:?} * {:?}", self.shape(), row.shape()));
        }
        let r = row.data();
        let data = self.data().chunks(d).flat_map(|c| c.iter().zip(r.iter()).map(|(&x, &s)| x * s)).collect();
        drop(r);
        Ok(Self::from_op(
            OpKind::MulRow,
            self.shape().to_vec(),
            data,
            vec![self.clone(), row.clone()],
            Box::new(move |a| {
                let (x, r) = (a.parents[0].data(), a.parents[1].data());
                let mut dr = vec![T::zero(); d];
                let mut dx = Vec::with_capacity(x.len());
                for (gc, xc) in a.grad.chunks(d).zip(x.chunks(d)) {
                    for j in 0..d {
                        dx.push(gc[j] * r[j]);
                        dr[j] += gc[j] * xc[j];
                    }
                }
                vec![Some(dx), Some(dr)]
            }),
        ))
    }

    pub fn scale(&self, s: T) -> Self {
        let data = self.data().iter().map(|&x| x * s).collect();
        Self::from_op(
            OpKind::Scale,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| vec![Some(a.grad.iter().map(|&g| g * s).collect())]),
        )
    }

    pub fn add_scalar(&self, s: T) -> Self {
        let data = self.data().iter().map(|&x| x + s).collect();
        Self::from_op(
            OpKind::AddScalar,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|a| vec![Some(a.grad.to_vec())]),
        )
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn concat(parts: &[Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| crate::Error::InvalidArgument("concat of nothing".into()))?;
        check_axis(first.shape(), axis)?;
        let mut shape = first.shape().to_vec();
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            let mut s = p.shape().to_vec();
            if s.len() != shape.len() {
                return shape_err(format!("concat rank mismatch {:?} vs {:?}", first.shape(), p.shape()));
            }
            sizes.push(s[axis]);
            s[axis] = shape[axis];
            if s != shape {
                return shape_err(format!("concat along {axis}: {:?} vs {:?}", first.shape(), p.shape()));
            }
        }
        shape[axis] = sizes.iter().sum();
        let (outer, total, inner) = around_axis(&shape, axis);
        let mut data = Vec::with_capacity(numel(&shape));
        let guards: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for (g, &len) in guards.iter().zip(&sizes) {
                data.extend_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
        }
        drop(guards);
        Ok(Self::from_op(
            OpKind::Concat,
            shape,
            data,
            parts.to_vec(),
            Box::new(move |a| {
                let mut grads: Vec<Vec<T>> = sizes.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
                for o in 0..outer {
                    let mut offset = o * total * inner;
                    for (g, &len) in grads.iter_mut().zip(&sizes) {
                        g.extend_from_slice(&a.grad[offset..offset + len * inner]);
                        offset += len * inner;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        check_axis(self.shape(), axis)?;
        let (outer, full, inner) = around_axis(self.shape(), axis);
        if len == 0 || start + len > full {
            return shape_err(format!("slice {start}..{} of axis {axis} in {:?}", start + len, self.shape()));
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        drop(src);
        Ok(Self::from_op(
            OpKind::Slice,
            shape,
            data,
            vec![self.clone()],
            Box::new(move |a| {
                let mut g = vec![T::zero(); outer * full * inner];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    g[base..base + len * inner].copy_from_slice(&a.grad[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return shape_err(format!("reshape {:?} -> {shape:?}", self.shape()));
        }
        Ok(Self::from_op(
            OpKind::Custom,
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|a| vec![Some(a.grad.to_vec())]),
        ))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let transpose = move |src: &[T], rows: usize, cols: usize| {
            let mut out = vec![T::zero(); rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    out[j * rows + i] = src[i * cols + j];
                }
            }
            out
        };
        let data = transpose(&self.data(), r, c);
        Ok(Self::from_op(
            OpKind::Transpose,
            vec![c, r],
            data,
            vec![self.clone()],
            Box::new(move |a| vec![Some(transpose(a.grad, c, r))]),
        ))
    }

    /// Reverses the order of entries along `axis`.
    pub fn flip(&self, axis: usize) -> Result<Self> {
        check_axis(self.shape(), axis)?;
        let (outer, len, inner) = around_axis(self.shape(), axis);
        let flip = move |src: &[T]| {
            let mut out = Vec::with_capacity(src.len());
            for o in 0..outer {
                for i in (0..len).rev() {
                    let base = (o * len + i) * inner;
                    out.extend_from_slice(&src[base..base + inner]);
                }
            }
            out
        };
        let data = flip(&self.data());
        Ok(Self::from_op(
            OpKind::Flip,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| vec![Some(flip(a.grad))]),
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Self {
        let d = last_dim(self.shape());
        let mut data = self.to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v = *v / total);
        }
        Self::from_op(
            OpKind::Softmax,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| {
                let mut g = Vec::with_capacity(a.grad.len());
                for (gr, yr) in a.grad.chunks(d).zip(a.output.chunks(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                    g.extend(gr.iter().zip(yr).map(|(&g, &y)| y * (g - dot)));
                }
                vec![Some(g)]
            }),
        )
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&self) -> Self {
        let d = last_dim(self.shape());
        let mut data = self.to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            row.iter_mut().for_each(|v| *v = *v - lse);
        }
        Self::from_op(
            OpKind::LogSoftmax,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| {
                let mut g = Vec::with_capacity(a.grad.len());
                for (gr, yr) in a.grad.chunks(d).zip(a.output.chunks(d)) {
                    let total: T = gr.iter().copied().sum();
                    g.extend(gr.iter().zip(yr).map(|(&g, &y)| g - y.exp() * total));
                }
                vec![Some(g)]
            }),
        )
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Self, beta: &Self, eps: T) -> Result<Self> {
        let d = last_dim(self.shape());
        if gamma.shape() != [d] || beta.shape() != [d] {
            return shape_err(format!(
                "layer_norm over {d} with gamma {:?}, beta {:?}",
                gamma.shape(),
                beta.shape()
            ));
        }
        let rows = self.numel() / d;
        let dn = T::from_usize(d).expect("dimension fits");
        let mut xhat = self.to_vec();
        let mut inv_std = Vec::with_capacity(rows);
        for row in xhat.chunks_mut(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let (g, b) = (gamma.data(), beta.data());
        let data = xhat
            .chunks(d)
            .flat_map(|row| row.iter().zip(g.iter()).zip(b.iter()).map(|((&x, &g), &b)| x * g + b))
            .collect();
        drop((g, b));
        Ok(Self::from_op(
            OpKind::LayerNorm,
            self.shape().to_vec(),
            data,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |a| {
                let gamma = a.parents[1].data();
                let mut dx = Vec::with_capacity(a.grad.len());
                let mut dgamma = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                for ((gr, xr), &is) in a.grad.chunks(d).zip(xhat.chunks(d)).zip(&inv_std) {
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for j in 0..d {
                        let dxh = gr[j] * gamma[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xr[j];
                        dgamma[j] += gr[j] * xr[j];
                        dbeta[j] += gr[j];
                    }
                    for j in 0..d {
                        let dxh = gr[j] * gamma[j];
                        dx.push(is * (dxh - (sum_dxh + xr[j] * sum_dxh_xh) / dn));
                    }
                }
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            }),
        ))
    }

    pub fn sigmoid(&self) -> Self {
        self.map_unary(OpKind::Sigmoid, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn silu(&self) -> Self {
        self.map_unary(
            OpKind::Silu,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn relu(&self) -> Self {
        self.map_unary(
            OpKind::Relu,
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn exp(&self) -> Self {
        self.map_unary(OpKind::Exp, T::exp, |_, y| y)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Self {
        self.map_unary(OpKind::Softplus, softplus, |x, _| sigmoid(x))
    }

    /// Strided periodic correlation along the last axis:
    /// `y[r, i] = sum_j f[j] * x[r, (stride*i + j) mod n]`.
    pub fn conv_down(&self, filter: &Self, stride: usize) -> Result<Self> {
        let (rows, n) = self.dims2()?;
        let taps = conv_taps(filter)?;
        if stride == 0 || stride > n || n % stride != 0 {
            return invalid(format!("stride {stride} does not tile a periodic signal of length {n}"));
        }
        if taps > n {
            return invalid(format!("filter of length {taps} is longer than the periodic input ({n})"));
        }
        let q = n / stride;
        let mut out = vec![T::zero(); rows * q];
        {
            let (x, f) = (self.data(), filter.data());
            for r in 0..rows {
                let xr = &x[r * n..(r + 1) * n];
                for i in 0..q {
                    out[r * q + i] = (0..taps).map(|j| f[j] * xr[(stride * i + j) % n]).sum();
                }
            }
        }
        Ok(Self::from_op(
            OpKind::ConvDown,
            vec![rows, q],
            out,
            vec![self.clone(), filter.clone()],
            Box::new(move |a| {
                let (x, f) = (a.parents[0].data(), a.parents[1].data());
                let mut dx = vec![T::zero(); rows * n];
                let mut df = vec![T::zero(); taps];
                for r in 0..rows {
                    for i in 0..q {
                        let g = a.grad[r * q + i];
                        for j in 0..taps {
                            let idx = r * n + (stride * i + j) % n;
                            dx[idx] += g * f[j];
                            df[j] += g * x[idx];
                        }
                    }
                }
                vec![Some(dx), Some(df)]
            }),
        ))
    }

    /// Transpose of [`Tensor::conv_down`]: upsample by `stride` then filter,
    /// `y[r, (stride*i + j) mod n] += h[j] * c[r, i]` with `n = stride * q`.
    pub fn conv_up(&self, filter: &Self, stride: usize) -> Result<Self> {
        let (rows, q) = self.dims2()?;
        let taps = conv_taps(filter)?;
        if stride == 0 {
            return invalid("stride must be positive");
        }
        let n = q * stride;
        if taps > n {
            return invalid(format!("filter of length {taps} is longer than the periodic output ({n})"));
        }
        let mut out = vec![T::zero(); rows * n];
        {
            let (c, h) = (self.data(), filter.data());
            for r in 0..rows {
                for i in 0..q {
                    let v = c[r * q + i];
                    for j in 0..taps {
                        out[r * n + (stride * i + j) % n] += h[j] * v;
                    }
                }
            }
        }
        Ok(Self::from_op(
            OpKind::ConvUp,
            vec![rows, n],
            out,
            vec![self.clone(), filter.clone()],
            Box::new(move |a| {
                let (c, h) = (a.parents[0].data(), a.parents[1].data());
                let mut dc = vec![T::zero(); rows * q];
                let mut dh = vec![T::zero(); taps];
                for r in 0..rows {
                    for i in 0..q {
                        let v = c[r * q + i];
                        let mut acc = T::zero();
                        for j in 0..taps {
                            let g = a.grad[r * n + (stride * i + j) % n];
                            acc += h[j] * g;
                            dh[j] += g * v;
                        }
                        dc[r * q + i] = acc;
                    }
                }
                vec![Some(dc), Some(dh)]
            }),
        ))
    }

    /// Inverted dropout. Identity when `train` is false; otherwise each entry
    /// is kept with probability `1 - p` and rescaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&self, p: f64, rng: &mut R, train: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return invalid(format!("dropout probability {p} outside [0, 1)"));
        }
        if !train || p == 0.0 {
            return Ok(self.clone());
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() >= p { keep } else { T::zero() })
            .collect();
        let data = self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(Self::from_op(
            OpKind::Dropout,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| vec![Some(a.grad.iter().zip(&mask).map(|(&g, &m)| g * m).collect())]),
        ))
    }

    pub fn sum(&self) -> Self {
        let total = self.data().iter().copied().sum();
        let n = self.numel();
        Self::from_op(
            OpKind::Sum,
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |a| vec![Some(vec![a.grad[0]; n])]),
        )
    }

    pub fn mean(&self) -> Self {
        let n = self.numel();
        let inv = T::one() / T::from_usize(n).expect("size fits");
        let total: T = self.data().iter().copied().sum();
        Self::from_op(
            OpKind::Mean,
            vec![1],
            vec![total * inv],
            vec![self.clone()],
            Box::new(move |a| vec![Some(vec![a.grad[0] * inv; n])]),
        )
    }

    /// Mean over rows of a matrix, giving a vector of length `cols`.
    pub fn mean_rows(&self) -> Result<Self> {
        let (rows, cols) = self.dims2()?;
        let inv = T::one() / T::from_usize(rows).expect("size fits");
        let mut out = vec![T::zero(); cols];
        for row in self.data().chunks(cols) {
            out.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o = *o * inv);
        Ok(Self::from_op(
            OpKind::MeanRows,
            vec![cols],
            out,
            vec![self.clone()],
            Box::new(move |a| {
                let g: Vec<T> = (0..rows).flat_map(|_| a.grad.iter().map(|&g| g * inv)).collect();
                vec![Some(g)]
            }),
        ))
    }

    /// One component of the DFT of a real signal along `axis`:
    /// `Real` gives `sum_n x_n cos(2πkn/N)`, `Imag` gives `-sum_n x_n sin(2πkn/N)`.
    pub fn dft(&self, axis: usize, part: DftPart) -> Result<Self> {
        check_axis(self.shape(), axis)?;
        let (outer, len, inner) = around_axis(self.shape(), axis);
        let fft = FftPlanner::<T>::new().plan_fft_forward(len);
        let apply = move |src: &[T]| {
            let mut out = vec![T::zero(); src.len()];
            let mut line = vec![Complex::new(T::zero(), T::zero()); len];
            for o in 0..outer {
                for i in 0..inner {
                    for (n, c) in line.iter_mut().enumerate() {
                        *c = Complex::new(src[(o * len + n) * inner + i], T::zero());
                    }
                    fft.process(&mut line);
                    for (k, c) in line.iter().enumerate() {
                        out[(o * len + k) * inner + i] = match part {
                            DftPart::Real => c.re,
                            DftPart::Imag => c.im,
                        };
                    }
                }
            }
            out
        };
        let apply = Arc::new(apply);
        let data = apply(&self.data());
        // The transform matrix is symmetric, so the adjoint is the same map.
        Ok(Self::from_op(
            OpKind::Dft,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |a| vec![Some(apply(a.grad))]),
        ))
    }

    /// Forward identity whose backward passes gradient only where `mask` is
    /// set; unmasked entries behave as if detached.
    pub fn grad_gate(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.numel() {
            return shape_err(format!("grad_gate mask of {} for {:?}", mask.len(), self.shape()));
        }
        let mask = mask.to_vec();
        Ok(Self::from_op(
            OpKind::GradGate,
            self.shape().to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(move |a| {
                let g = a.grad.iter().zip(&mask).map(|(&g, &m)| if m { g } else { T::zero() });
                vec![Some(g.collect())]
            }),
        ))
    }

    /// Mean cross-entropy of row-wise logits against class indices.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Self> {
        let (rows, classes) = self.dims2()?;
        if targets.len() != rows || targets.iter().any(|&t| t >= classes) {
            return invalid(format!("cross_entropy targets {targets:?} for {rows}x{classes} logits"));
        }
        let logp = self.log_softmax();
        let mut picks = Vec::with_capacity(rows);
        for (r, &t) in targets.iter().enumerate() {
            picks.push(logp.slice(0, r, 1)?.slice(1, t, 1)?);
        }
        let inv = T::one() / T::from_usize(rows).expect("size fits");
        Ok(Self::concat(&picks, 0)?.sum().scale(-inv))
    }
}

fn conv_taps<T: Scalar>(filter: &Tensor<T>) -> Result<usize> {
    match filter.shape() {
        [l] => Ok(*l),
        s => shape_err(format!("filter must be a vector, got {s:?}")),
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    fn p(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::param(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(eye.matmul(&x).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_shape_error() {
        let a = t(&[2, 3], &[0.0; 6]);
        let err = a.matmul(&a).unwrap_err();
        assert!(matches!(err, crate::Error::Shape(_)), "{err}");
    }

    #[test]
    fn softmax_uniform() {
        let y = t(&[3], &[0.0, 0.0, 0.0]).softmax().to_vec();
        for v in y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn conv_down_matches_sliding_window() {
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let f = t(&[2], &[1.0, 1.0]);
        let y = x.conv_down(&f, 2).unwrap().to_vec();
        let xs = [1.0, 2.0, 3.0, 4.0];
        let mut oracle = Vec::new();
        let mut start = 0;
        while start < xs.len() {
            let window: f64 = (0..2).map(|j| xs[(start + j) % 4]).sum();
            oracle.push(window);
            start += 2;
        }
        assert_eq!(y, oracle);
        assert_eq!(y, vec![3.0, 7.0]);
    }

    #[test]
    fn conv_rejects_long_filters_and_bad_strides() {
        let x = t(&[1, 4], &[1.0; 4]);
        assert!(matches!(x.conv_down(&t(&[6], &[1.0; 6]), 2), Err(crate::Error::InvalidArgument(_))));
        assert!(matches!(x.conv_down(&t(&[2], &[1.0; 2]), 3), Err(crate::Error::InvalidArgument(_))));
        assert!(matches!(x.conv_down(&t(&[2], &[1.0; 2]), 8), Err(crate::Error::InvalidArgument(_))));
        let c = t(&[1, 1], &[1.0]);
        assert!(matches!(c.conv_up(&t(&[4], &[1.0; 4]), 2), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn sum_and_square_grads() {
        let x = p(&[2, 2], &[0.5, -1.0, 2.0, 3.0]);
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);

        let x = p(&[3], &[1.0, 2.0, 3.0]);
        x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn grads_accumulate_across_uses() {
        let x = p(&[3], &[1.0, -2.0, 0.5]);
        let w = t(&[3], &[2.0, 3.0, 4.0]);
        let once = {
            x.mul(&w).unwrap().sum().backward().unwrap();
            let g = x.grad().unwrap();
            x.zero_grad();
            g
        };
        x.mul(&w).unwrap().add(&x.mul(&w).unwrap()).unwrap().sum().backward().unwrap();
        let twice = x.grad().unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn eval_dropout_is_identity() {
        let x = p(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let y = x.dropout(0.5, &mut rng, false).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
        assert!(x.dropout(1.5, &mut rng, true).is_err());
    }

    #[test]
    fn grad_gate_is_transparent_forward() {
        let x = p(&[4], &[1.0, -0.0, 3.5, -2.25]);
        let y = x.grad_gate(&[true, false, true, false]).unwrap();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(y.to_vec()), bits(x.to_vec()));
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn concat_slice_roundtrip() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[5.0, 6.0]);
        let c = Tensor::concat(&[a.clone(), b], 1).unwrap();
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.slice(1, 0, 2).unwrap().to_vec(), a.to_vec());
        assert!(Tensor::concat(&[a.clone(), t(&[3, 1], &[0.0; 3])], 1).is_err());
        assert!(a.slice(0, 1, 2).is_err());
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = t(&[1, 2], &[0.3, 0.3]);
        let loss = logits.cross_entropy(&[1]).unwrap().item().unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-14);
    }
}
