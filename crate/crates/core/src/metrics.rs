//! Detection metrics: EER with a parametric confidence interval, AUC, ACC
//! and F1. Higher scores mean "more bonafide"; bonafide is the positive
//! class for F1.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    /// Class index used by the classifier head.
    pub fn class(self) -> usize {
        match self {
            Self::Bonafide => 0,
            Self::Spoof => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bonafide => "bonafide",
            Self::Spoof => "spoof",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" => Ok(Self::Bonafide),
            "spoof" => Ok(Self::Spoof),
            other => Err(Error::Format(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub utt_id: String,
    pub score: f64,
    pub label: Label,
}

/// Scored trials of both classes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Self {
        Self { entries }
    }

    /// Builds a set from bare score lists, naming trials `b0…`, `s0…`.
    pub fn from_scores(bonafide: &[f64], spoof: &[f64]) -> Self {
        let mk = |prefix: &str, label, scores: &[f64]| {
            scores
                .iter()
                .enumerate()
                .map(|(i, &score)| ScoreEntry { utt_id: format!("{prefix}{i}"), score, label })
                .collect::<Vec<_>>()
        };
        let mut entries = mk("b", Label::Bonafide, bonafide);
        entries.extend(mk("s", Label::Spoof, spoof));
        Self { entries }
    }

    pub fn n_real(&self) -> usize {
        self.entries.iter().filter(|e| e.label == Label::Bonafide).count()
    }

    pub fn n_fake(&self) -> usize {
        self.entries.len() - self.n_real()
    }

    fn split(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut bona = Vec::new();
        let mut spoof = Vec::new();
        for e in &self.entries {
            if !e.score.is_finite() {
                return invalid(format!("score of {} is {}", e.utt_id, e.score));
            }
            match e.label {
                Label::Bonafide => bona.push(e.score),
                Label::Spoof => spoof.push(e.score),
            }
        }
        if bona.is_empty() || spoof.is_empty() {
            return invalid(format!(
                "both classes are required ({} bonafide, {} spoof)",
                bona.len(),
                spoof.len()
            ));
        }
        bona.sort_by(f64::total_cmp);
        spoof.sort_by(f64::total_cmp);
        Ok((bona, spoof))
    }

    /// Writes `utt_id score label` lines with six decimals.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{} {:.6} {}", e.utt_id, e.score, e.label)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let [utt, score, label] = fields[..] else {
                return Err(Error::Format(format!("{}:{}: expected `utt_id score label`", path.display(), n + 1)));
            };
            let score = score
                .parse()
                .map_err(|_| Error::Format(format!("{}:{}: bad score `{score}`", path.display(), n + 1)))?;
            entries.push(ScoreEntry { utt_id: utt.to_string(), score, label: label.parse()? });
        }
        Ok(Self { entries })
    }
}

/// Number of values in the sorted slice strictly below `x`.
fn count_below(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v < x)
}

/// Number of values in the sorted slice at or above `x`.
fn count_at_or_above(sorted: &[f64], x: f64) -> usize {
    sorted.len() - count_below(sorted, x)
}

/// Equal error rate and the threshold where it occurs.
///
/// Operating points are taken at every distinct score plus one beyond the
/// maximum. FAR(θ) counts spoof scores `>= θ`, FRR(θ) bonafide scores `< θ`.
/// The crossing is linearly interpolated between the two adjacent points
/// where FAR − FRR changes sign; an exact zero takes the lowest threshold.
pub fn eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    let (bona, spoof) = scores.split()?;
    let (nr, nf) = (bona.len() as f64, spoof.len() as f64);
    let mut thresholds: Vec<f64> = bona.iter().chain(&spoof).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().expect("non-empty");
    thresholds.push(top + top.abs().max(1.0) * 1e-9);

    let point = |theta: f64| {
        let far = count_at_or_above(&spoof, theta) as f64 / nf;
        let frr = count_below(&bona, theta) as f64 / nr;
        (far, frr)
    };
    let (mut prev_far, mut prev_frr) = point(thresholds[0]);
    let mut prev_theta = thresholds[0];
    for &theta in &thresholds {
        let (far, frr) = point(theta);
        let diff = far - frr;
        if diff <= 0.0 {
            if diff == 0.0 {
                return Ok((far, theta));
            }
            let prev_diff = prev_far - prev_frr;
            let alpha = prev_diff / (prev_diff - diff);
            let rate = (1.0 - alpha) * prev_far + alpha * far;
            return Ok((rate, (1.0 - alpha) * prev_theta + alpha * theta));
        }
        (prev_far, prev_frr, prev_theta) = (far, frr, theta);
    }
    unreachable!("FAR - FRR reaches -1 beyond the largest score")
}

pub const Z_95: f64 = 1.96;

/// Half-width of the 95% parametric interval `1.96 σ`,
/// `σ = 0.5 sqrt(EER (1 − EER) (n_r + n_f) / (n_r n_f))`.
pub fn eer_ci(eer: f64, n_real: usize, n_fake: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&eer) || n_real == 0 || n_fake == 0 {
        return invalid(format!("eer_ci({eer}, {n_real}, {n_fake}) outside its domain"));
    }
    let (nr, nf) = (n_real as f64, n_fake as f64);
    let sigma = 0.5 * (eer * (1.0 - eer) * (nr + nf) / (nr * nf)).sqrt();
    Ok(Z_95 * sigma)
}

/// AUC (Mann–Whitney, ties count ½), and ACC and F1 at `threshold`
/// (score `>= threshold` predicts bonafide).
pub fn auc_f1_acc(scores: &ScoreSet, threshold: f64) -> Result<(f64, f64, f64)> {
    let (bona, spoof) = scores.split()?;
    // Twice the U statistic keeps half credit exact in integers.
    let twice_u: u64 = bona
        .iter()
        .map(|&b| {
            let below = count_below(&spoof, b);
            let ties = spoof.partition_point(|&s| s <= b) - below;
            (2 * below + ties) as u64
        })
        .sum();
    let auc = twice_u as f64 / (2 * bona.len() * spoof.len()) as f64;

    let tp = count_at_or_above(&bona, threshold);
    let fn_ = bona.len() - tp;
    let fp = count_at_or_above(&spoof, threshold);
    let tn = spoof.len() - fp;
    let acc = (tp + tn) as f64 / (bona.len() + spoof.len()) as f64;
    let f1 = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
    Ok((auc, f1, acc))
}

/// Utterance score from its chunk scores.
pub fn utterance_score(chunks: &[f64]) -> Result<f64> {
    if chunks.is_empty() {
        return invalid("utterance has no chunks");
    }
    Ok(chunks.iter().sum::<f64>() / chunks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_ci_halfwidth: f64,
    pub threshold: f64,
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

impl EvalReport {
    pub fn compute(scores: &ScoreSet) -> Result<Self> {
        let (eer, threshold) = eer(scores)?;
        let (n_real, n_fake) = (scores.n_real(), scores.n_fake());
        let (auc, f1, acc) = auc_f1_acc(scores, threshold)?;
        Ok(Self { eer, eer_ci_halfwidth: eer_ci(eer, n_real, n_fake)?, threshold, acc, f1, auc, n_real, n_fake })
    }

    /// Machine-readable `metric = value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "eer = {:.6}\neer_ci = {:.6}\nthreshold = {:.6}\nacc = {:.6}\nf1 = {:.6}\nauc = {:.6}\nn_real = {}\nn_fake = {}\nf1_positive = bonafide\n",
            self.eer, self.eer_ci_halfwidth, self.threshold, self.acc, self.f1, self.auc, self.n_real, self.n_fake
        )
    }

    pub fn table_header() -> String {
        format!("{:<16} {:>18} {:>8} {:>8} {:>8}", "run", "EER (%)", "ACC (%)", "F1 (%)", "AUC (%)")
    }

    /// One fixed-width row in percent, e.g. `10.58 (± 0.43)`.
    pub fn table_row(&self, name: &str) -> String {
        format!(
            "{:<16} {:>18} {:>8.2} {:>8.2} {:>8.2}",
            name,
            format!("{:.2} (± {:.2})", 100.0 * self.eer, 100.0 * self.eer_ci_halfwidth),
            100.0 * self.acc,
            100.0 * self.f1,
            100.0 * self.auc
        )
    }
}
