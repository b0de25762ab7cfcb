use proptest::prelude::*;
use wavesp::data::{
    chunk_audio, frontend_features, synth_corpus, write_corpus, ArtifactKind, CorpusSpec, Frontend, Manifest, Split,
    Waveform, SAMPLE_RATE,
};
use wavesp::metrics::Label;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunk_count_is_ceiling_and_prefixes_reconstruct(
        n in 1usize..150_000,
        len_s in prop::sample::select(vec![0.25, 1.0, 4.0]),
        seed in any::<u64>(),
    ) {
        let samples: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 997) as f64 / 997.0 - 0.5).collect();
        let w = Waveform::new(samples.clone(), SAMPLE_RATE);
        let chunks = chunk_audio(&w, len_s).unwrap();
        let per = (len_s * SAMPLE_RATE as f64) as usize;
        prop_assert_eq!(chunks.len(), (w.duration() / len_s).ceil() as usize);
        prop_assert_eq!(chunks.len(), n.div_ceil(per));
        prop_assert!(chunks.iter().all(|c| c.len() == per));
        let mut joined: Vec<f64> = chunks.iter().flat_map(|c| c.samples.iter().copied()).collect();
        prop_assert!(joined[n..].iter().all(|&v| v == 0.0));
        joined.truncate(n);
        prop_assert_eq!(joined, samples);
    }
}

#[test]
fn frontend_is_frozen_and_repeatable() {
    let w = Waveform::new((0..64_000).map(|i| (i as f64 * 0.01).sin() * 0.3).collect(), SAMPLE_RATE);
    let a = frontend_features::<f64>(&w, 64, 3).unwrap();
    let b = frontend_features::<f64>(&w, 64, 3).unwrap();
    assert_eq!(a.shape(), [201, 64]);
    assert!(!a.requires_grad());
    assert_eq!(a.to_vec(), b.to_vec());
    let desk = Frontend::new(64, 3, 1.0).unwrap();
    assert_eq!(desk.frames(), 51);
    let short = Waveform::new(w.samples[..16_000].to_vec(), SAMPLE_RATE);
    assert_eq!(desk.features::<f64>(&short).unwrap().shape(), [51, 64]);
}

#[test]
fn written_corpus_round_trips_through_the_manifest() {
    let spec = CorpusSpec { n_train: 3, n_dev: 2, n_eval: 1, seed: 4, ..CorpusSpec::default() };
    let corpus = synth_corpus(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_corpus(&corpus, dir.path()).unwrap();
    let manifest = Manifest::read(&path).unwrap();
    assert_eq!(manifest.entries.len(), 2 * (3 + 2 + 1));
    for split in Split::ALL {
        let entries = manifest.split(split).unwrap();
        for label in [Label::Bonafide, Label::Spoof] {
            assert_eq!(entries.iter().filter(|e| e.label == label).count(), spec.count(split));
        }
        let ids: Vec<&str> = entries.iter().map(|e| e.utt_id.as_str()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
    let first = &corpus.utterances[0];
    let entry = manifest.entries.iter().find(|e| e.utt_id == first.utt_id).unwrap();
    let back = Waveform::read_wav(&entry.wav_path).unwrap();
    assert_eq!(back.len(), first.waveform.len());
    assert!(back.samples.iter().zip(&first.waveform.samples).all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0));
}

#[test]
fn corpus_is_seed_deterministic_and_within_range() {
    let spec = CorpusSpec {
        n_train: 4,
        n_dev: 1,
        n_eval: 1,
        seed: 9,
        artifact_kinds: vec![ArtifactKind::AmBuzz, ArtifactKind::SpectralNotch],
        ..CorpusSpec::default()
    };
    let a = synth_corpus(&spec).unwrap();
    assert_eq!(a, synth_corpus(&spec).unwrap());
    for u in &a.utterances {
        assert_eq!(u.waveform.sample_rate, SAMPLE_RATE);
        assert!(u.waveform.samples.iter().all(|v| (-1.0..=1.0).contains(v)));
        let secs = u.waveform.duration();
        assert!((spec.min_seconds - 1e-3..=spec.max_seconds + 1e-3).contains(&secs), "{secs}");
    }
    let other = synth_corpus(&CorpusSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a.utterances[0].waveform, other.utterances[0].waveform);
}
