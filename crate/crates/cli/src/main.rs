use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use wavesp::ablate::{self, AblationAxis};
use wavesp::checkpoint::Checkpoint;
use wavesp::config::ExperimentConfig;
use wavesp::data::{synth_corpus, write_corpus, Manifest, Split};
use wavesp::metrics::EvalReport;
use wavesp::model::{count_params_for, full_scale_config, NOMINAL_EXTRACTOR_PARAMS};
use wavesp::train::{self, frontend_for, load_split, UttFeatures};

#[derive(Parser)]
#[command(name = "wavesp", version, about = "Wavelet-sparse prompt tuning for spoofed speech detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (sectioned `key = value` file); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command (training seed, or corpus seed for gen-corpus).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus (WAV files plus manifest.txt).
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Train and save the best-dev-EER checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Corpus manifest, overriding `data.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a split with a checkpoint and report metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "eval")]
        split: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// One training per value along an ablation axis, then a comparison table.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// component | filters | rho | m
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `0.1,0.5,0.9` or `w/o LWD,w/o WDS`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write pooled classifier embeddings of a split.
    ExportEmb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "eval")]
        split: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Trainable and total parameter counts.
    Params {
        #[command(flatten)]
        common: Common,
        /// Count the full-scale nominal model (24 x 1024 encoder plus front end).
        #[arg(long)]
        full_scale: bool,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn manifest_path(cfg: &ExperimentConfig, flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned().unwrap_or_else(|| PathBuf::from(&cfg.data.manifest))
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    Manifest::read(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn features(cfg: &ExperimentConfig, manifest: &Manifest, split: Split) -> Result<Vec<UttFeatures<f64>>> {
    let frontend = frontend_for(cfg)?;
    Ok(load_split(manifest, split, &frontend, cfg.data.chunk_seconds)?)
}

fn write_report(report: &EvalReport, name: &str, path: &Path) -> Result<()> {
    fs::write(path, report.key_values())?;
    println!("{}", report.key_values().trim_end());
    println!("{}", EvalReport::table_header());
    println!("{}", report.table_row(name));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.corpus.seed = seed;
            }
            let corpus = synth_corpus(&cfg.corpus_spec()?)?;
            let path = write_corpus(&corpus, &out_dir(&common)?)?;
            println!("wrote {} utterances, manifest {}", corpus.utterances.len(), path.display());
        }
        Command::Train { common, manifest } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.train.seed = seed;
            }
            let mpath = manifest_path(&cfg, manifest.as_ref());
            cfg.data.manifest = mpath.display().to_string();
            let manifest = read_manifest(&mpath)?;
            let dir = out_dir(&common)?;
            let outcome = train::train::<f64>(&cfg, &manifest)?;
            outcome.checkpoint.save(&dir.join("checkpoint.wsp"))?;
            train::write_history(&outcome.history, &dir.join("history.txt"))?;
            fs::write(dir.join("config.toml"), cfg.to_text())?;
            println!(
                "trained {} epochs{}; best dev EER {:.2}% at epoch {}; checkpoint {}",
                outcome.history.len(),
                if outcome.stopped_early { " (early stop)" } else { "" },
                100.0 * outcome.checkpoint.best_dev_eer,
                outcome.checkpoint.best_epoch,
                dir.join("checkpoint.wsp").display()
            );
        }
        Command::Eval { common, checkpoint, split, manifest } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let split: Split = split.parse()?;
            let cfg = &ckpt.config;
            let manifest = read_manifest(&manifest_path(cfg, manifest.as_ref()))?;
            let items = features(cfg, &manifest, split)?;
            let net = ckpt.model::<f64>()?;
            let (scores, report) = train::evaluate(&net, &items)?;
            let dir = out_dir(&common)?;
            scores.write(&dir.join(format!("scores_{split}.txt")))?;
            write_report(&report, &format!("{} {split}", cfg.model.variant), &dir.join(format!("report_{split}.txt")))?;
        }
        Command::Ablate { common, axis, values, manifest } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.train.seed = seed;
            }
            let axis: AblationAxis = axis.parse()?;
            if values.is_empty() {
                bail!("--values is required");
            }
            let manifest = read_manifest(&manifest_path(&cfg, manifest.as_ref()))?;
            let train_items = features(&cfg, &manifest, Split::Train)?;
            let dev_items = features(&cfg, &manifest, Split::Dev)?;
            let eval_items = features(&cfg, &manifest, Split::Eval)?;
            let runs = ablate::ablate(&cfg, axis, &values, &train_items, &dev_items, &eval_items)?;
            let dir = out_dir(&common)?;
            for (i, r) in runs.iter().enumerate() {
                let slug: String =
                    r.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
                let sub = dir.join(format!("{i:02}_{slug}"));
                fs::create_dir_all(&sub)?;
                fs::write(sub.join("report.txt"), r.report.key_values())?;
                fs::write(sub.join("config.toml"), r.config.to_text())?;
                info!("{}: {} epochs", r.name, r.epochs);
            }
            let table = ablate::table(&runs);
            fs::write(dir.join("ablation.txt"), &table)?;
            print!("{table}");
        }
        Command::ExportEmb { common, checkpoint, split, manifest } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let split: Split = split.parse()?;
            let manifest = read_manifest(&manifest_path(&ckpt.config, manifest.as_ref()))?;
            let items = features(&ckpt.config, &manifest, split)?;
            let net = ckpt.model::<f64>()?;
            let path = out_dir(&common)?.join(format!("embeddings_{split}.txt"));
            train::export_embeddings(&net, &items, &path)?;
            println!("wrote {} embeddings to {}", items.len(), path.display());
        }
        Command::Params { common, full_scale } => {
            let (model_cfg, extractor) = if full_scale {
                (full_scale_config(), NOMINAL_EXTRACTOR_PARAMS)
            } else {
                (load_config(&common)?.model_config()?, 0)
            };
            let count = count_params_for(&model_cfg, extractor);
            println!("trainable = {}", count.trainable);
            println!("total = {}", count.total);
            println!("percent = {:.3}", count.percent());
            println!("{count}");
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
