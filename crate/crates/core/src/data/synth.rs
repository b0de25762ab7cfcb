//! Synthetic bonafide/spoof corpus.
//!
//! Bonafide clips are glottal-like harmonic tones with two formant bumps, a
//! syllabic envelope and white noise. Spoof clips run the same generator and
//! then apply one artifact.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Split, Waveform, SAMPLE_RATE};
use crate::error::{invalid, Error, Result};
use crate::metrics::Label;
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArtifactKind {
    SpectralNotch,
    AliasingFold,
    PhaseJitter,
    AmBuzz,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] =
        [ArtifactKind::SpectralNotch, ArtifactKind::AliasingFold, ArtifactKind::PhaseJitter, ArtifactKind::AmBuzz];
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SpectralNotch => "spectral_notch",
            Self::AliasingFold => "aliasing_fold",
            Self::PhaseJitter => "phase_jitter",
            Self::AmBuzz => "am_buzz",
        })
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown artifact kind `{s}`")))
    }
}

/// Per-class utterance counts for each split, plus clip durations in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub artifact_kinds: Vec<ArtifactKind>,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_dev: 50,
            n_eval: 200,
            seed: 0,
            artifact_kinds: ArtifactKind::ALL.to_vec(),
            min_seconds: 0.5,
            max_seconds: 1.25,
        }
    }
}

impl CorpusSpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Dev => self.n_dev,
            Split::Eval => self.n_eval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_seconds > 0.0 && self.min_seconds <= self.max_seconds && self.max_seconds.is_finite()) {
            return invalid(format!("bad clip duration range [{}, {}]", self.min_seconds, self.max_seconds));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub label: Label,
    pub split: Split,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }
}

fn gaussian(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

fn formant_gain(f: f64, f1: f64, f2: f64) -> f64 {
    1.0 + 2.0 * (-((f - f1) / 150.0).powi(2)).exp() + 1.5 * (-((f - f2) / 200.0).powi(2)).exp()
}

fn bonafide_signal(r: &mut StreamRng, n: usize) -> Vec<f64> {
    let sr = f64::from(SAMPLE_RATE);
    let dur = n as f64 / sr;
    let f0 = r.gen_range(80.0..300.0);
    let glide: f64 = r.gen_range(-0.1..0.1);
    let (f1, f2) = (r.gen_range(300.0..900.0), r.gen_range(1000.0..2500.0));
    let harmonics: Vec<(f64, f64, f64)> = (1..=50)
        .map(|k| k as f64)
        .take_while(|k| k * f0 * (1.0 + glide.abs()) < 4000.0)
        .map(|k| (k, formant_gain(k * f0, f1, f2) / k, r.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let (rate, env_phase) = (r.gen_range(2.0..6.0), r.gen_range(0.0..std::f64::consts::TAU));
    let tau = std::f64::consts::TAU;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let theta = tau * f0 * (t + glide * t * t / (2.0 * dur));
            let env = 0.6 + 0.4 * (tau * rate * t + env_phase).sin();
            env * harmonics.iter().map(|&(k, a, ph)| a * (k * theta + ph).sin()).sum::<f64>()
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    x.iter_mut().for_each(|v| *v *= 0.5 / peak);
    let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let snr_db: f64 = r.gen_range(10.0..30.0);
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    x.iter_mut().for_each(|v| *v += sigma * gaussian(r));
    x
}

/// Applies `f(bin, frequency_hz)` to the spectrum of `x` and transforms back.
fn filter_spectrum(x: &mut [f64], mut f: impl FnMut(usize, f64) -> Complex<f64>) {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for k in 0..=n / 2 {
        let g = f(k, k as f64 * f64::from(SAMPLE_RATE) / n as f64);
        buf[k] *= g;
        if k != 0 && n - k != k {
            buf[n - k] *= g.conj();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    for (v, c) in x.iter_mut().zip(&buf) {
        *v = c.re / n as f64;
    }
}

fn apply_artifact(kind: ArtifactKind, x: &mut [f64], r: &mut StreamRng) {
    match kind {
        ArtifactKind::SpectralNotch => {
            let centre = r.gen_range(1000.0..3000.0);
            let half_width = r.gen_range(200.0..400.0);
            filter_spectrum(x, |_, f| {
                if (f - centre).abs() < half_width {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::new(1.0, 0.0)
                }
            });
        }
        ArtifactKind::AliasingFold => {
            // Modulating by (-1)^n mirrors the band around fs/4 into the upper half.
            let gain = r.gen_range(0.3..0.6);
            for (i, v) in x.iter_mut().enumerate() {
                *v *= if i % 2 == 0 { 1.0 + gain } else { 1.0 - gain };
            }
        }
        ArtifactKind::PhaseJitter => {
            let sigma = r.gen_range(1.0..2.0);
            for block in x.chunks_mut(64) {
                let jitter: Vec<f64> = (0..=block.len() / 2).map(|_| sigma * gaussian(r)).collect();
                filter_spectrum(block, |k, _| if k == 0 { Complex::new(1.0, 0.0) } else { Complex::from_polar(1.0, jitter[k]) });
            }
        }
        ArtifactKind::AmBuzz => {
            let freq = r.gen_range(300.0..600.0);
            let depth = r.gen_range(0.7..1.0);
            let sr = f64::from(SAMPLE_RATE);
            for (i, v) in x.iter_mut().enumerate() {
                let phase = (i as f64 * freq / sr).fract();
                *v *= if phase < 0.5 { 1.0 } else { 1.0 - depth };
            }
        }
    }
}

fn utterance(spec: &CorpusSpec, split: Split, label: Label, index: usize) -> Utterance {
    let mut r = rng::indexed(spec.seed, &format!("corpus/{split}/{label}"), index as u64);
    let seconds = if spec.max_seconds > spec.min_seconds {
        r.gen_range(spec.min_seconds..spec.max_seconds)
    } else {
        spec.min_seconds
    };
    let n = ((seconds * f64::from(SAMPLE_RATE)).round() as usize).max(1);
    let mut x = bonafide_signal(&mut r, n);
    if label == Label::Spoof && !spec.artifact_kinds.is_empty() {
        let kind = spec.artifact_kinds[r.gen_range(0..spec.artifact_kinds.len())];
        apply_artifact(kind, &mut x, &mut r);
    }
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Utterance {
        utt_id: format!("{split}_{label}_{index:04}"),
        label,
        split,
        waveform: Waveform::new(x, SAMPLE_RATE),
    }
}

/// Deterministic given `spec`; every utterance draws from its own stream.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut utterances = Vec::new();
    for split in Split::ALL {
        for label in [Label::Bonafide, Label::Spoof] {
            utterances.extend((0..spec.count(split)).map(|i| utterance(spec, split, label, i)));
        }
    }
    Ok(Corpus { utterances })
}
