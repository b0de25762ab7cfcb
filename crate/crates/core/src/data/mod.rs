//! Waveforms, chunking, the synthetic corpus and the frozen feature front end.

mod frontend;
mod synth;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use frontend::{frontend_features, Frontend, HOP, WINDOW};
pub use synth::{synth_corpus, ArtifactKind, Corpus, CorpusSpec, Utterance};

use crate::error::{invalid, Error, Result};
use crate::metrics::Label;

pub const SAMPLE_RATE: u32 = 16_000;
/// Chunk length of the full-scale protocol, in seconds.
pub const DEFAULT_CHUNK_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Reads a mono 16-bit PCM WAV file.
    pub fn read_wav(path: &Path) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(Error::Format(format!("{}: expected mono 16-bit PCM", path.display())));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { samples, sample_rate: spec.sample_rate })
    }

    /// Writes mono 16-bit PCM, clipping to [-1, 1].
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

/// Number of samples in a chunk of `len_s` seconds.
pub fn chunk_samples(len_s: f64, sample_rate: u32) -> Result<usize> {
    if !(len_s.is_finite() && len_s > 0.0) {
        return invalid(format!("chunk length must be positive, got {len_s}"));
    }
    let n = (len_s * f64::from(sample_rate)).round() as usize;
    if n == 0 {
        return invalid(format!("chunk of {len_s} s holds no samples"));
    }
    Ok(n)
}

/// Consecutive non-overlapping windows of `len_s` seconds; the last one is
/// zero-padded at the tail.
pub fn chunk_audio(w: &Waveform, len_s: f64) -> Result<Vec<Waveform>> {
    let n = chunk_samples(len_s, w.sample_rate)?;
    if w.is_empty() {
        return invalid("cannot chunk an empty waveform");
    }
    Ok(w.samples
        .chunks(n)
        .map(|c| {
            let mut samples = c.to_vec();
            samples.resize(n, 0.0);
            Waveform::new(samples, w.sample_rate)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Dev => "dev",
            Self::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "eval" => Ok(Self::Eval),
            other => Err(Error::Format(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub wav_path: PathBuf,
    pub label: Label,
    pub split: Split,
}

/// `utt_id wav_path label split` lines. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [utt, wav, label, split] = fields[..] else {
                return Err(Error::Format(format!("{}:{}: expected `utt_id wav_path label split`", path.display(), n + 1)));
            };
            let wav = Path::new(wav);
            entries.push(ManifestEntry {
                utt_id: utt.to_string(),
                wav_path: if wav.is_absolute() { wav.to_path_buf() } else { base.join(wav) },
                label: label.parse()?,
                split: split.parse()?,
            });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{} {} {} {}", e.utt_id, e.wav_path.display(), e.label, e.split)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Entries of one split sorted by `utt_id`; an absent split is an I/O error.
    pub fn split(&self, split: Split) -> Result<Vec<&ManifestEntry>> {
        let mut out: Vec<_> = self.entries.iter().filter(|e| e.split == split).collect();
        if out.is_empty() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("split `{split}` is absent from the manifest"),
            )));
        }
        out.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
        Ok(out)
    }
}

/// Writes every utterance as `wav/<utt_id>.wav` under `dir` plus `manifest.txt`,
/// returning the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    let wav_dir = dir.join("wav");
    fs::create_dir_all(&wav_dir)?;
    let mut manifest = Manifest::default();
    for u in &corpus.utterances {
        let rel = Path::new("wav").join(format!("{}.wav", u.utt_id));
        u.waveform.write_wav(&dir.join(&rel))?;
        manifest.entries.push(ManifestEntry { utt_id: u.utt_id.clone(), wav_path: rel, label: u.label, split: u.split });
    }
    let path = dir.join("manifest.txt");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(seconds: f64) -> Waveform {
        let n = (seconds * 16000.0) as usize;
        Waveform::new((0..n).map(|i| (i % 97) as f64 / 100.0).collect(), SAMPLE_RATE)
    }

    #[test]
    fn exact_length_is_one_untouched_chunk() {
        let w = ramp(4.0);
        let c = chunk_audio(&w, 4.0).unwrap();
        assert_eq!(c, vec![w]);
    }

    #[test]
    fn ten_seconds_gives_three_chunks() {
        let w = ramp(10.0);
        let c = chunk_audio(&w, 4.0).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|x| x.len() == 64_000));
        assert!(c[2].samples[32_000..].iter().all(|&s| s == 0.0));
        assert_eq!(c[2].samples[..32_000], w.samples[128_000..]);
    }

    #[test]
    fn short_input_is_padded() {
        let c = chunk_audio(&ramp(1.0), 4.0).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].samples[16_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(chunk_audio(&Waveform::new(vec![], SAMPLE_RATE), 4.0), Err(Error::InvalidArgument(_))));
        assert!(chunk_audio(&ramp(1.0), 0.0).is_err());
        assert!(chunk_audio(&ramp(1.0), f64::NAN).is_err());
    }

    #[test]
    fn wav_roundtrip_is_quantised() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0, 0.5, -0.25, 1.5], SAMPLE_RATE);
        w.write_wav(&path).unwrap();
        let r = Waveform::read_wav(&path).unwrap();
        assert_eq!(r.sample_rate, SAMPLE_RATE);
        assert_eq!(r.len(), 4);
        for (a, b) in r.samples.iter().zip([0.0, 0.5, -0.25, 1.0]) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn manifest_roundtrip_and_missing_split() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            entries: vec![ManifestEntry {
                utt_id: "u1".into(),
                wav_path: "wav/u1.wav".into(),
                label: Label::Spoof,
                split: Split::Dev,
            }],
        };
        let path = dir.path().join("manifest.txt");
        m.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "u1 wav/u1.wav spoof dev\n");
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back.entries[0].wav_path, dir.path().join("wav/u1.wav"));
        assert_eq!(back.split(Split::Dev).unwrap().len(), 1);
        assert!(matches!(back.split(Split::Eval), Err(Error::Io(_))));
    }
}
