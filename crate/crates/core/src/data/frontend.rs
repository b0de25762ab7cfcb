//! Frozen STFT front end: log power spectra through a seeded random
//! projection to `d` channels.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{chunk_samples, Waveform, DEFAULT_CHUNK_SECONDS, SAMPLE_RATE};
use crate::autodiff::Tensor;
use crate::error::{invalid, Result};
use crate::rng;
use crate::scalar::{gemm, Scalar};

/// 25 ms analysis window at 16 kHz.
pub const WINDOW: usize = 400;
/// 20 ms hop at 16 kHz.
pub const HOP: usize = 320;
const FFT_LEN: usize = 512;
const BINS: usize = FFT_LEN / 2 + 1;
const POWER_FLOOR: f64 = 1e-10;

pub struct Frontend {
    d: usize,
    chunk: usize,
    window: Vec<f64>,
    /// `BINS × d`, row-major.
    projection: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Frontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frontend").field("d", &self.d).field("chunk", &self.chunk).finish()
    }
}

impl Frontend {
    pub fn new(d: usize, seed: u64, chunk_seconds: f64) -> Result<Self> {
        if d == 0 {
            return invalid("front-end width must be positive");
        }
        let chunk = chunk_samples(chunk_seconds, SAMPLE_RATE)?;
        let mut r = rng::stream(seed, "frontend");
        let scale = 1.0 / (BINS as f64).sqrt();
        let projection = (0..BINS * d)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
            .collect();
        let window = (0..WINDOW)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WINDOW as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(FFT_LEN);
        Ok(Self { d, chunk, window, projection, fft })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk
    }

    /// Number of frames for the configured chunk (centred framing).
    pub fn frames(&self) -> usize {
        self.chunk / HOP + 1
    }

    /// Log power spectrum of every frame, `frames × BINS`.
    fn log_spectra(&self, samples: &[f64]) -> Vec<f64> {
        let frames = samples.len() / HOP + 1;
        let mut out = Vec::with_capacity(frames * BINS);
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        for t in 0..frames {
            buf.fill(Complex::new(0.0, 0.0));
            let start = (t * HOP) as isize - (WINDOW / 2) as isize;
            for (j, w) in self.window.iter().enumerate() {
                let idx = start + j as isize;
                if idx >= 0 && (idx as usize) < samples.len() {
                    buf[j].re = samples[idx as usize] * w;
                }
            }
            self.fft.process(&mut buf);
            out.extend(buf[..BINS].iter().map(|c| (c.norm_sqr() + POWER_FLOOR).ln()));
        }
        out
    }

    /// `T × d` features of one chunk. Never requires grad.
    pub fn features<T: Scalar>(&self, w: &Waveform) -> Result<Tensor<T>> {
        if w.sample_rate != SAMPLE_RATE {
            return invalid(format!("expected {SAMPLE_RATE} Hz audio, got {} Hz", w.sample_rate));
        }
        if w.len() != self.chunk {
            return invalid(format!("expected a chunk of {} samples, got {}", self.chunk, w.len()));
        }
        let spectra = self.log_spectra(&w.samples);
        let frames = self.frames();
        let mut feats = vec![0.0; frames * self.d];
        gemm(false, false, frames, BINS, self.d, &spectra, &self.projection, &mut feats, false);
        Tensor::new(&[frames, self.d], feats.into_iter().map(T::from_f64_lossy).collect())
    }
}

/// Features of a full-length chunk; builds a fresh front end each call.
pub fn frontend_features<T: Scalar>(w: &Waveform, d: usize, seed: u64) -> Result<Tensor<T>> {
    Frontend::new(d, seed, DEFAULT_CHUNK_SECONDS)?.features(w)
}
