//! Training, evaluation and embedding export over a corpus manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;

use crate::autodiff::Tensor;
use crate::checkpoint::{snapshot, Checkpoint, EpochRecord};
use crate::config::ExperimentConfig;
use crate::data::{chunk_audio, Frontend, Manifest, Split, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport, Label, ScoreEntry, ScoreSet};
use crate::model::WaveSpNet;
use crate::optim::Adam;
use crate::rng;
use crate::scalar::Scalar;
use crate::ssm::score;
use crate::wavelet::{pr_penalty, DEFAULT_PR_PROBE};
use crate::Mode;

/// Minimum dev-loss decrease that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

/// Front-end features of every chunk of one utterance.
#[derive(Debug, Clone)]
pub struct UttFeatures<T: Scalar> {
    pub utt_id: String,
    pub label: Label,
    pub chunks: Vec<Tensor<T>>,
}

pub fn frontend_for(cfg: &ExperimentConfig) -> Result<Frontend> {
    Frontend::new(cfg.encoder.d, cfg.data.frontend_seed, cfg.data.chunk_seconds)
}

/// Chunks and featurises one waveform.
pub fn featurise<T: Scalar>(w: &Waveform, frontend: &Frontend, chunk_seconds: f64) -> Result<Vec<Tensor<T>>> {
    chunk_audio(w, chunk_seconds)?.iter().map(|c| frontend.features(c)).collect()
}

/// Loads a split sorted by `utt_id`.
pub fn load_split<T: Scalar>(
    manifest: &Manifest,
    split: Split,
    frontend: &Frontend,
    chunk_seconds: f64,
) -> Result<Vec<UttFeatures<T>>> {
    manifest
        .split(split)?
        .into_iter()
        .map(|e| {
            let w = Waveform::read_wav(&e.wav_path)?;
            Ok(UttFeatures { utt_id: e.utt_id.clone(), label: e.label, chunks: featurise(&w, frontend, chunk_seconds)? })
        })
        .collect()
}

/// Tracks consecutive epochs without a strict dev-loss improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, stale: 0 }
    }

    /// Records one epoch's dev loss; true once `patience` epochs in a row
    /// failed to improve.
    pub fn update(&mut self, dev_loss: f64) -> bool {
        if dev_loss < self.best - MIN_IMPROVEMENT {
            self.best = dev_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// Eval-mode chunk pass: utterance scores (chunk mean), chunk-level mean
/// cross-entropy and per-utterance mean pooled vectors.
pub struct Scored {
    pub scores: ScoreSet,
    pub loss: f64,
    pub embeddings: Vec<Vec<f64>>,
}

pub fn score_items<T: Scalar>(net: &WaveSpNet<T>, items: &[UttFeatures<T>]) -> Result<Scored> {
    let mut r = rng::stream(0, "eval");
    let mut entries = Vec::with_capacity(items.len());
    let mut embeddings = Vec::with_capacity(items.len());
    let (mut loss, mut chunks) = (0.0, 0usize);
    for item in items {
        let mut chunk_scores = Vec::with_capacity(item.chunks.len());
        let mut pooled: Vec<f64> = Vec::new();
        for x in &item.chunks {
            let out = net.forward(x, Mode::Eval, &mut r)?;
            loss += out.logits.cross_entropy(&[item.label.class()])?.item()?.as_f64();
            chunks += 1;
            chunk_scores.push(score(&out.logits)?.as_f64());
            let p = out.pooled.to_vec();
            if pooled.is_empty() {
                pooled = vec![0.0; p.len()];
            }
            pooled.iter_mut().zip(&p).for_each(|(a, b)| *a += b.as_f64());
        }
        let n = item.chunks.len() as f64;
        pooled.iter_mut().for_each(|v| *v /= n);
        embeddings.push(pooled);
        entries.push(ScoreEntry {
            utt_id: item.utt_id.clone(),
            score: metrics::utterance_score(&chunk_scores)?,
            label: item.label,
        });
    }
    if !loss.is_finite() {
        return Err(Error::NumericInstability(format!("evaluation loss is {loss}")));
    }
    Ok(Scored { scores: ScoreSet::new(entries), loss: loss / chunks.max(1) as f64, embeddings })
}

pub struct TrainOutcome<T: Scalar> {
    /// Model holding the best-dev-EER weights.
    pub model: WaveSpNet<T>,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Adam on cross-entropy (+ λ_pr · PR penalty) over the trainable set only.
/// Dev loss drives early stopping; dev EER selects the returned epoch
/// (earliest wins ties).
pub fn train_on<T: Scalar>(
    cfg: &ExperimentConfig,
    train: &[UttFeatures<T>],
    dev: &[UttFeatures<T>],
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let net = WaveSpNet::<T>::new(cfg.model_config()?, seed)?;
    let params = net.trainable_parameters();
    let mut opt = Adam::new(params.clone(), cfg.train.lr)?;
    let samples: Vec<(&Tensor<T>, usize, &str)> = train
        .iter()
        .flat_map(|u| u.chunks.iter().map(move |c| (c, u.label.class(), u.utt_id.as_str())))
        .collect();
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training split has no chunks".into()));
    }
    let lambda = T::from_f64_lossy(cfg.train.lambda_pr);
    let mut step_rng = rng::stream(seed, "train-step");
    let mut stopper = EarlyStopping::new(cfg.train.patience);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<Vec<T>>, Adam<T>)> = None;
    let mut stopped_early = false;
    let mut step = 0u64;

    for epoch in 1..=cfg.train.max_epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng::indexed(seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(cfg.train.batch) {
            step += 1;
            opt.zero_grad();
            let inv = T::one() / T::from_usize(batch.len()).expect("size fits");
            for &i in batch {
                let (x, class, utt) = samples[i];
                let out = net.forward(x, Mode::Train, &mut step_rng)?;
                let loss = out.logits.cross_entropy(&[class])?;
                let value = loss.item()?.as_f64();
                if !value.is_finite() {
                    return Err(Error::NumericInstability(format!(
                        "loss is {value} at epoch {epoch}, step {step} (utterance {utt})"
                    )));
                }
                total += value;
                loss.scale(inv).backward()?;
            }
            if cfg.train.lambda_pr > 0.0 && net.config().trains_filters() {
                let penalty = pr_penalty(&net.bank, DEFAULT_PR_PROBE)?.scale(lambda);
                let value = penalty.item()?.as_f64();
                if !value.is_finite() {
                    return Err(Error::NumericInstability(format!(
                        "PR penalty is {value} at epoch {epoch}, step {step}"
                    )));
                }
                penalty.backward()?;
            }
            opt.step();
        }
        let train_loss = total / samples.len() as f64;
        let scored = score_items(&net, dev)?;
        let (dev_eer, _) = metrics::eer(&scored.scores)?;
        let record = EpochRecord { epoch, train_loss, dev_loss: scored.loss, dev_eer };
        info!(
            "epoch {epoch}: train loss {train_loss:.5}, dev loss {:.5}, dev EER {:.2}%",
            scored.loss,
            100.0 * dev_eer
        );
        history.push(record);
        if best.as_ref().map_or(true, |b| dev_eer < b.0) {
            best = Some((dev_eer, epoch, snapshot(&params), opt.clone()));
        }
        if stopper.update(scored.loss) {
            debug!("early stop after epoch {epoch}");
            stopped_early = true;
            break;
        }
    }

    let (best_eer, best_epoch, values, best_opt) = best.expect("at least one epoch ran");
    for (p, v) in params.iter().zip(values) {
        *p.data_mut() = v;
    }
    let checkpoint = Checkpoint::capture(cfg, &net, &best_opt, best_eer, best_epoch, history.clone());
    Ok(TrainOutcome { model: net, checkpoint, history, stopped_early })
}

/// Trains from the manifest's train and dev splits.
pub fn train<T: Scalar>(cfg: &ExperimentConfig, manifest: &Manifest) -> Result<TrainOutcome<T>> {
    let frontend = frontend_for(cfg)?;
    let chunk = cfg.data.chunk_seconds;
    let train_items = load_split(manifest, Split::Train, &frontend, chunk)?;
    let dev_items = load_split(manifest, Split::Dev, &frontend, chunk)?;
    train_on(cfg, &train_items, &dev_items)
}

/// Scores a split and computes its report.
pub fn evaluate<T: Scalar>(net: &WaveSpNet<T>, items: &[UttFeatures<T>]) -> Result<(ScoreSet, EvalReport)> {
    let scored = score_items(net, items)?;
    let report = EvalReport::compute(&scored.scores)?;
    Ok((scored.scores, report))
}

/// Writes `utt_id label v_1 … v_d` per utterance (mean pooled vector over chunks).
pub fn export_embeddings<T: Scalar>(net: &WaveSpNet<T>, items: &[UttFeatures<T>], path: &Path) -> Result<()> {
    let scored = score_items(net, items)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (item, emb) in items.iter().zip(&scored.embeddings) {
        write!(w, "{} {}", item.utt_id, item.label)?;
        for v in emb {
            write!(w, " {v:.8e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the loss curve as `epoch train_loss dev_loss dev_eer` lines.
pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "epoch train_loss dev_loss dev_eer")?;
    for r in history {
        writeln!(w, "{} {:.10} {:.10} {:.6}", r.epoch, r.train_loss, r.dev_loss, r.dev_eer)?;
    }
    w.flush()?;
    Ok(())
}
