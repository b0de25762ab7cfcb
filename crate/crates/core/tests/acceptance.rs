//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use wavesp::ablate::{ablate, AblationAxis, AblationRun};
use wavesp::autodiff::{grad_check, GradCheck, Tensor};
use wavesp::config::ExperimentConfig;
use wavesp::data::{synth_corpus, write_corpus, CorpusSpec, Manifest, Split};
use wavesp::metrics::{auc_f1_acc, eer, eer_ci, ScoreSet};
use wavesp::model::{count_params_for, full_scale_config, ModelConfig, WaveSpNet, NOMINAL_EXTRACTOR_PARAMS};
use wavesp::rng;
use wavesp::ssm::{selective_scan, ClassifierConfig, SsmParams};
use wavesp::train::{self, evaluate, frontend_for, load_split, UttFeatures};
use wavesp::wavelet::{
    lwd, lwr, wavelet_sparse_prompt, FilterBank, PromptPath, PromptSet, PromptVariant, SparsifyConfig, WaveletFamily,
};
use wavesp::{Adam, Mode};

mod common;

use common::{brute_auc, brute_eer_bounds, max_abs_diff, naive_scan, random, random_score_set};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64());
    Ok(())
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn c1_perfect_reconstruction() -> Outcome {
    let start = Instant::now();
    let bank = FilterBank::<f64>::new(WaveletFamily::Haar, true);
    let sparsify = SparsifyConfig::disabled();
    let mut worst = 0.0f64;
    for d in [8, 64, 1024] {
        for trial in 0..100 {
            let x = random(&[4, d], trial, &format!("pr{d}"), 1.0);
            let (a, c) = lwd(&x, &bank).map_err(|e| e.to_string())?;
            let s = wavesp::wavelet::wds(&a, &c, &sparsify, Mode::Train, &mut rng::stream(trial, "wds"))
                .map_err(|e| e.to_string())?;
            let y = lwr(&s.approx, &s.detail, &bank).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(&y.to_vec(), &x.to_vec()));
        }
    }
    ensure!(worst < 1e-6, "max round-trip error {worst:.3e}");
    within(start, Duration::from_secs(5), "reconstruction sweep")?;
    Ok(format!("max |lwr(lwd(x)) - x| = {worst:.2e} over 300 inputs"))
}

fn desk_model(layers: usize) -> ModelConfig {
    let mut cfg = ExperimentConfig::default().model_config().expect("default config is valid");
    cfg.encoder.layers = layers;
    cfg
}

fn c2_gradient_integrity() -> Outcome {
    let start = Instant::now();
    // (a) wavelet prompt path: tokens and learnable filters.
    let bank = FilterBank::<f64>::new(WaveletFamily::Db2, true);
    let tokens = Tensor::param(&[4, 64], random(&[4, 64], 1, "tok", 1.0).to_vec()).map_err(|e| e.to_string())?;
    let probe = random(&[4, 64], 2, "probe", 1.0);
    let mut params = vec![tokens.clone()];
    params.extend(bank.parameters());
    let sparsify = SparsifyConfig::new(0.1, true).map_err(|e| e.to_string())?;
    let f = || {
        let out = wavelet_sparse_prompt(&tokens, &bank, &sparsify, PromptPath::default(), Mode::Eval, &mut rng::stream(0, "g"))?;
        Ok(out.mul(&probe)?.sum())
    };
    let err_a = grad_check(f, &params, 1e-5).map_err(|e| e.to_string())?;
    ensure!(err_a < 1e-4, "wavelet path relative error {err_a:.3e}");

    // (b) one prompted encoder layer + classifier on a two-sample batch.
    let net = WaveSpNet::<f64>::new(desk_model(1), 0).map_err(|e| e.to_string())?;
    let xs = [random(&[51, 64], 3, "x0", 1.0), random(&[51, 64], 4, "x1", 1.0)];
    let loss = || {
        let mut r = rng::stream(0, "g");
        let l0 = net.forward(&xs[0], Mode::Eval, &mut r)?.logits.cross_entropy(&[0])?;
        let l1 = net.forward(&xs[1], Mode::Eval, &mut r)?.logits.cross_entropy(&[1])?;
        Ok(l0.add(&l1)?.scale(0.5))
    };
    let report = GradCheck::new(1e-5)
        .map_err(|e| e.to_string())?
        .sample(6, 7)
        .run(loss, &net.trainable_parameters())
        .map_err(|e| e.to_string())?;
    ensure!(report.max_rel_error < 1e-4, "model relative error {:.3e}", report.max_rel_error);
    within(start, Duration::from_secs(60), "gradient checks")?;
    Ok(format!(
        "wavelet path {err_a:.2e}, encoder+classifier {:.2e} over {} sampled entries",
        report.max_rel_error, report.entries_checked
    ))
}

fn c3_frozen_backbone() -> Outcome {
    let cfg = desk_model(4);
    let net = WaveSpNet::<f64>::new(cfg, 0).map_err(|e| e.to_string())?;
    let before: Vec<Vec<u64>> = net.frozen_tensors().iter().map(|t| bits(&t.to_vec())).collect();
    let trainable_before: Vec<Vec<u64>> = net.trainable_parameters().iter().map(|t| bits(&t.to_vec())).collect();
    let mut opt = Adam::new(net.trainable_parameters(), 5e-4).map_err(|e| e.to_string())?;
    let mut r = rng::stream(0, "steps");
    for step in 0..50u64 {
        opt.zero_grad();
        let x = random(&[20, 64], step, "feat", 1.0);
        let loss = net.forward(&x, Mode::Train, &mut r).map_err(|e| e.to_string())?.logits;
        loss.cross_entropy(&[(step % 2) as usize]).and_then(|l| l.backward()).map_err(|e| e.to_string())?;
        opt.step();
    }
    let after: Vec<Vec<u64>> = net.frozen_tensors().iter().map(|t| bits(&t.to_vec())).collect();
    ensure!(before == after, "a backbone tensor changed");
    let fresh = wavesp::Encoder::new(cfg.encoder).map_err(|e| e.to_string())?;
    let rebuilt: Vec<Vec<u64>> = fresh.tensors().iter().map(|t| bits(&t.to_vec())).collect();
    ensure!(rebuilt == after, "backbone differs from its seed-derived initialisation");
    ensure!(net.frozen_tensors().iter().all(|t| !t.requires_grad() && t.grad().is_none()), "backbone holds gradients");
    let trainable = net.count_params(0).trainable;
    ensure!(opt.state_len() == trainable, "optimizer state {} vs trainable {trainable}", opt.state_len());
    let ids: Vec<usize> = opt.params().iter().map(Tensor::id).collect();
    let want: Vec<usize> = net.trainable_parameters().iter().map(Tensor::id).collect();
    ensure!(ids == want, "optimizer parameter list differs from the trainable set");
    let trainable_after: Vec<Vec<u64>> = net.trainable_parameters().iter().map(|t| bits(&t.to_vec())).collect();
    ensure!(trainable_after != trainable_before, "trainable parameters never moved");
    Ok(format!("{} backbone tensors bitwise unchanged after 50 steps; optimizer state = {trainable} scalars", after.len()))
}

fn c4_shape_contracts() -> Outcome {
    let wide = PromptSet::<f64>::new(PromptVariant::PartialWspt, 1, 10, 4, 1024, &mut rng::stream(0, "p"))
        .map_err(|e| e.to_string())?;
    let bank = FilterBank::new(WaveletFamily::Haar, true);
    let sparsify = SparsifyConfig::new(0.1, true).map_err(|e| e.to_string())?;
    let mut r = rng::stream(0, "r");
    let p_tilde = wide.processed(0, &bank, &sparsify, PromptPath::default(), Mode::Train, &mut r).map_err(|e| e.to_string())?;
    ensure!(p_tilde.shape() == [10, 1024], "P~ shape {:?}", p_tilde.shape());
    let net = WaveSpNet::<f64>::new(desk_model(4), 0).map_err(|e| e.to_string())?;
    let out = net.encode(&random(&[201, 64], 1, "x", 1.0), Mode::Train, &mut r).map_err(|e| e.to_string())?;
    ensure!(out.shape() == [211, 64], "encoder output {:?}", out.shape());

    let mut runner = TestRunner::new(Config { cases: 64, failure_persistence: None, ..Config::default() });
    let strategy = (2usize..12, 0.0..1.0f64, 1usize..40, 0usize..5, 1usize..6);
    runner
        .run(&strategy, |(p, frac, t, v, half_heads)| {
            let m = 1 + ((p - 2) as f64 * frac) as usize;
            let d = 4 * half_heads;
            let mut cfg = ModelConfig { variant: PromptVariant::ALL[v], p, m, ..ModelConfig::default() };
            cfg.encoder = wavesp::backbone::EncoderConfig { layers: 2, d, heads: 2, ff: 8, seed: t as u64 };
            cfg.classifier = ClassifierConfig { blocks: 1, d_state: 2, hidden: 4, dropout: 0.1 };
            let net = WaveSpNet::<f64>::new(cfg, 1).unwrap();
            let mut r = rng::stream(t as u64, "prop");
            for k in 0..2 {
                let pk = net.prompts.processed(k, &net.bank, &cfg.sparsify, cfg.path, Mode::Train, &mut r).unwrap();
                prop_assert_eq!(pk.shape(), &[p, d][..]);
            }
            let out = net.encode(&random(&[t, d], 2, "x", 1.0), Mode::Train, &mut r).unwrap();
            prop_assert_eq!(out.shape(), &[p + t, d][..]);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("P~ 10x1024, I 211x64; 64 random (p, m, T, d, variant) cases hold".into())
}

fn c5_scan_oracle() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    let worst = std::cell::Cell::new(0.0f64);
    runner
        .run(&(1usize..=32, 1usize..=8, 1usize..=8, any::<u64>()), |(steps, d, n, seed)| {
            let params = SsmParams::<f64>::new(d, n, &mut rng::stream(seed, "ssm"));
            let u = random(&[steps, d], seed, "u", 1.0);
            let got = selective_scan(&u, &params).unwrap().to_vec();
            let err = max_abs_diff(&got, &naive_scan(&u.to_vec(), steps, d, &params));
            worst.set(worst.get().max(err));
            prop_assert!(err < 1e-10, "error {}", err);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("200 instances, max error {:.2e}", worst.get()))
}

fn c6_metrics_oracle() -> Outcome {
    let mut r = rng::stream(0, "acceptance-metrics");
    for trial in 0..500 {
        let (bona, spoof) = random_score_set(&mut r, 50);
        let set = ScoreSet::from_scores(&bona, &spoof);
        let (e, _) = eer(&set).map_err(|e| e.to_string())?;
        let (lo, hi) = brute_eer_bounds(&bona, &spoof);
        ensure!(lo - 1e-12 <= e && e <= hi + 1e-12, "trial {trial}: EER {e} outside [{lo}, {hi}]");
        let (auc, _, _) = auc_f1_acc(&set, 0.0).map_err(|e| e.to_string())?;
        let want = brute_auc(&bona, &spoof);
        ensure!(auc == want, "trial {trial}: AUC {auc} vs oracle {want}");
    }
    let ci = eer_ci(0.10, 100, 100).map_err(|e| e.to_string())?;
    ensure!((ci - 0.04158).abs() < 1e-5, "eer_ci(0.10, 100, 100) = {ci}");
    Ok(format!("500 trials agree; eer_ci(0.10, 100, 100) = {ci:.5}"))
}

static LEARNING: Mutex<Option<Learning>> = Mutex::new(None);

struct Learning {
    train_loss_first: f64,
    train_loss_fifth: Option<f64>,
}

fn c7_learning_signal() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.train.max_epochs = 30;
    let spec = CorpusSpec::default();
    ensure!(cfg.corpus_spec().map_err(|e| e.to_string())? == spec, "desk config does not use the default corpus");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = synth_corpus(&spec).map_err(|e| e.to_string())?;
    let manifest = Manifest::read(&write_corpus(&corpus, dir.path()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let outcome = train::train::<f64>(&cfg, &manifest).map_err(|e| e.to_string())?;
    let fe = frontend_for(&cfg).map_err(|e| e.to_string())?;
    let eval_items = load_split(&manifest, Split::Eval, &fe, cfg.data.chunk_seconds).map_err(|e| e.to_string())?;
    let (_, report) = evaluate(&outcome.model, &eval_items).map_err(|e| e.to_string())?;
    let h = &outcome.history;
    *LEARNING.lock().unwrap() = Some(Learning { train_loss_first: h[0].train_loss, train_loss_fifth: h.get(4).map(|r| r.train_loss) });
    let early = h.iter().take(5).map(|r| r.dev_eer).fold(f64::INFINITY, f64::min);
    let took = start.elapsed().as_secs_f64();
    let detail = format!(
        "eval EER {:.2}% (AUC {:.3}), best dev EER in epochs 1-5 {:.2}%, {} epochs, best epoch {}, {took:.0}s",
        100.0 * report.eer,
        report.auc,
        100.0 * early,
        h.len(),
        outcome.checkpoint.best_epoch
    );
    ensure!(early < 0.5, "dev EER never below chance in the first 5 epochs: {detail}");
    ensure!(report.eer <= 0.10, "eval EER above 10%: {detail}");
    within(start, Duration::from_secs(600), "desk training")?;
    Ok(detail)
}

fn tiny_ablation_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.encoder.layers = 1;
    cfg.encoder.d = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ff = 16;
    cfg.classifier.blocks = 1;
    cfg.classifier.hidden = 8;
    cfg.classifier.d_state = 2;
    cfg.train.max_epochs = 2;
    cfg.train.batch = 4;
    cfg.train.seed = 17;
    cfg.data.chunk_seconds = 0.5;
    cfg.corpus.n_train = 6;
    cfg.corpus.n_dev = 3;
    cfg.corpus.n_eval = 3;
    cfg.corpus.min_seconds = 0.4;
    cfg.corpus.max_seconds = 0.5;
    cfg
}

fn c8_ablation_machinery() -> Outcome {
    let cfg = tiny_ablation_config();
    let corpus = synth_corpus(&cfg.corpus_spec().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = Manifest::read(&write_corpus(&corpus, dir.path()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let fe = frontend_for(&cfg).map_err(|e| e.to_string())?;
    let load = |s| load_split::<f64>(&manifest, s, &fe, cfg.data.chunk_seconds).map_err(|e| e.to_string());
    let (tr, dev, ev): (Vec<UttFeatures<f64>>, _, _) = (load(Split::Train)?, load(Split::Dev)?, load(Split::Eval)?);
    let sweep = |axis: AblationAxis, values: &[&str]| -> Result<Vec<AblationRun>, String> {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let runs = ablate(&cfg, axis, &values, &tr, &dev, &ev).map_err(|e| e.to_string())?;
        ensure!(runs.len() == values.len(), "{axis}: {} reports for {} values", runs.len(), values.len());
        ensure!(runs.iter().all(|r| r.config.train.seed == cfg.train.seed), "{axis}: seeds differ");
        Ok(runs)
    };
    let rho = sweep(AblationAxis::Rho, &["0.1", "0.5", "0.7", "0.9"])?;
    ensure!(
        rho.iter().zip([0.1, 0.5, 0.7, 0.9]).all(|(r, v)| r.config.model.rho == v),
        "rho values not applied"
    );
    let m = sweep(AblationAxis::M, &["2", "4", "6", "8", "10"])?;
    ensure!(m.iter().zip([2, 4, 6, 8, 10]).all(|(r, v)| r.config.model.m == v), "m values not applied");
    let filters = sweep(AblationAxis::Filters, &["fixed", "learnable"])?;
    let bank_bits = |b: &[Vec<f64>]| b.iter().map(|v| bits(v)).collect::<Vec<_>>();
    ensure!(
        bank_bits(&filters[0].bank_before) == bank_bits(&filters[0].bank_after),
        "fixed-filter run changed the bank"
    );
    ensure!(filters[1].bank_before != filters[1].bank_after, "learnable-filter run left the bank untouched");
    let components = sweep(AblationAxis::Component, &["w/o LWD", "w/o WDS", "w/o LWR"])?;
    ensure!(
        ablate(&cfg, AblationAxis::Rho, &["1.5".to_string()], &tr, &dev, &ev).is_err(),
        "illegal rho accepted"
    );
    let reports = rho.len() + m.len() + filters.len() + components.len();
    Ok(format!("{reports} reports (rho 4, m 5, filters 2, component 3); fixed bank bitwise unchanged"))
}

/// Hand count: prompts, four filters, and the classifier stack.
fn closed_form_trainable(cfg: &ModelConfig) -> usize {
    let (d, h, n) = (cfg.encoder.d, cfg.classifier.hidden, cfg.classifier.d_state);
    let prompts = cfg.encoder.layers * cfg.p * d;
    let filters = if cfg.learnable_filters && cfg.variant != PromptVariant::Pt && cfg.variant != PromptVariant::FourierPt {
        4 * cfg.family.lowpass().len()
    } else {
        0
    };
    let scan_direction = n * h + 2 * h * n + h * h + h + h;
    let block = 2 * h + 3 * (h * h + h) + 2 * scan_direction;
    let classifier = (d * h + h) + cfg.classifier.blocks * block + 2 * h + (2 * h + 2);
    prompts + filters + classifier
}

fn closed_form_backbone(cfg: &ModelConfig) -> usize {
    let (d, ff) = (cfg.encoder.d, cfg.encoder.ff);
    cfg.encoder.layers * (4 * (d * d + d) + (d * ff + ff) + (ff * d + d) + 4 * d)
}

fn c9_parameter_accounting() -> Outcome {
    let mut configs = vec![desk_model(4)];
    let mut db2 = desk_model(2);
    db2.family = WaveletFamily::Db2;
    db2.p = 6;
    db2.m = 3;
    configs.push(db2);
    let mut pt = desk_model(3);
    pt.variant = PromptVariant::Pt;
    pt.classifier = ClassifierConfig { blocks: 2, d_state: 4, hidden: 32, dropout: 0.1 };
    configs.push(pt);
    for (i, cfg) in configs.iter().enumerate() {
        let net = WaveSpNet::<f64>::new(*cfg, 0).map_err(|e| e.to_string())?;
        let count = net.count_params(0);
        let want = closed_form_trainable(cfg);
        ensure!(count.trainable == want, "config {i}: trainable {} vs closed form {want}", count.trainable);
        let total = want + closed_form_backbone(cfg);
        ensure!(count.total == total, "config {i}: total {} vs closed form {total}", count.total);
    }
    let full = full_scale_config();
    let count = count_params_for(&full, NOMINAL_EXTRACTOR_PARAMS);
    ensure!(count.trainable == closed_form_trainable(&full), "full-scale trainable count mismatch");
    ensure!(count.percent() < 2.0, "full-scale trainable fraction {:.3}%", count.percent());
    Ok(format!("3 configs match exactly; full scale {count} of {} total", count.total))
}

fn c10_determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.train.max_epochs = 2;
    cfg.corpus.n_train = 8;
    cfg.corpus.n_dev = 4;
    cfg.corpus.n_eval = 4;
    let run = || -> Result<(String, String, String), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = synth_corpus(&cfg.corpus_spec().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let manifest = Manifest::read(&write_corpus(&corpus, dir.path()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let outcome = train::train::<f64>(&cfg, &manifest).map_err(|e| e.to_string())?;
        let hist = dir.path().join("history.txt");
        train::write_history(&outcome.history, &hist).map_err(|e| e.to_string())?;
        let ckpt = dir.path().join("checkpoint.wsp");
        outcome.checkpoint.save(&ckpt).map_err(|e| e.to_string())?;
        let net = wavesp::checkpoint::Checkpoint::load(&ckpt).and_then(|c| c.model::<f64>()).map_err(|e| e.to_string())?;
        let fe = frontend_for(&cfg).map_err(|e| e.to_string())?;
        let items = load_split(&manifest, Split::Eval, &fe, cfg.data.chunk_seconds).map_err(|e| e.to_string())?;
        let scores = dir.path().join("scores.txt");
        evaluate(&net, &items).map_err(|e| e.to_string())?.0.write(&scores).map_err(|e| e.to_string())?;
        let read = |p: &std::path::Path| std::fs::read_to_string(p).map_err(|e| e.to_string());
        Ok((read(&hist)?, read(&ckpt)?, read(&scores)?))
    };
    let (a, b) = (run()?, run()?);
    ensure!(a.0 == b.0, "loss curves differ");
    ensure!(a.1 == b.1, "checkpoints differ");
    ensure!(a.2 == b.2, "score files differ");
    Ok(format!("loss curve, checkpoint ({} bytes) and score file identical across runs", a.1.len()))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "perfect reconstruction", c1_perfect_reconstruction),
        (2, "gradient integrity", c2_gradient_integrity),
        (3, "frozen backbone", c3_frozen_backbone),
        (4, "shape contracts", c4_shape_contracts),
        (5, "scan oracle", c5_scan_oracle),
        (6, "metrics oracle", c6_metrics_oracle),
        (7, "desk-scale learning signal", c7_learning_signal),
        (8, "ablation machinery", c8_ablation_machinery),
        (9, "parameter accounting", c9_parameter_accounting),
        (10, "determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n}: PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if let Some(Learning { train_loss_first, train_loss_fifth }) = LEARNING.lock().unwrap().take() {
        match train_loss_fifth {
            Some(fifth) if fifth < train_loss_first => {
                println!("smoke: PASS train loss {train_loss_first:.4} (epoch 1) -> {fifth:.4} (epoch 5)")
            }
            other => {
                failed += 1;
                println!("smoke: FAIL train loss {train_loss_first:.4} (epoch 1) -> {other:?} (epoch 5)");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} failing");
        ExitCode::FAILURE
    }
}
