//! One-axis ablation sweeps with a shared seed and corpus.

use std::fmt;
use std::str::FromStr;

use crate::config::{ExperimentConfig, FilterMode};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::scalar::Scalar;
use crate::train::{evaluate, train_on, UttFeatures};
use crate::wavelet::PromptVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Component,
    Filters,
    Rho,
    M,
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Component => "component",
            Self::Filters => "filters",
            Self::Rho => "rho",
            Self::M => "m",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "component" => Ok(Self::Component),
            "filters" => Ok(Self::Filters),
            "rho" | "ρ" => Ok(Self::Rho),
            "m" => Ok(Self::M),
            _ => Err(Error::InvalidArgument(format!("unknown ablation axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Lwd,
    Wds,
    Lwr,
}

impl Component {
    fn label(self) -> &'static str {
        match self {
            Self::Lwd => "w/o LWD",
            Self::Wds => "w/o WDS",
            Self::Lwr => "w/o LWR",
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    /// Accepts `w/o LWD`, `wo-lwd`, `wo_lwd` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "wolwd" => Ok(Self::Lwd),
            "wowds" => Ok(Self::Wds),
            "wolwr" => Ok(Self::Lwr),
            _ => Err(Error::InvalidArgument(format!("component must be one of w/o LWD, w/o WDS, w/o LWR; got `{s}`"))),
        }
    }
}

/// Applies one axis value to `base`, returning the run's display name.
pub fn apply_value(base: &ExperimentConfig, axis: AblationAxis, value: &str) -> Result<(String, ExperimentConfig)> {
    let mut cfg = base.clone();
    let name = match axis {
        AblationAxis::Component => {
            let c: Component = value.parse()?;
            match c {
                Component::Lwd => cfg.model.decompose = false,
                Component::Wds => cfg.model.sparsify = false,
                Component::Lwr => cfg.model.reconstruct = false,
            }
            c.label().to_string()
        }
        AblationAxis::Filters => {
            let mode: FilterMode = value.parse().map_err(|e: Error| Error::InvalidArgument(e.to_string()))?;
            cfg.model.filters = mode.to_string();
            format!("{mode} filters")
        }
        AblationAxis::Rho => {
            let rho: f64 = value.parse().map_err(|_| Error::InvalidArgument(format!("ρ `{value}` is not a number")))?;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidArgument(format!("ρ must lie in (0, 1], got {rho}")));
            }
            cfg.model.rho = rho;
            format!("rho={rho}")
        }
        AblationAxis::M => {
            let m: usize = value.parse().map_err(|_| Error::InvalidArgument(format!("m `{value}` is not an integer")))?;
            let p = cfg.model.p;
            if !(2..=p).contains(&m) {
                return Err(Error::InvalidArgument(format!("m must lie in 2..={p}, got {m}")));
            }
            cfg.model.m = m;
            // Enhancing every token is the WSPT variant.
            cfg.model.variant = if m == p { PromptVariant::Wspt } else { PromptVariant::PartialWspt }.to_string();
            format!("m={m}")
        }
    };
    cfg.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((name, cfg))
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub name: String,
    pub config: ExperimentConfig,
    pub report: EvalReport,
    /// `[f0, f1, h0, h1]` before and after training, as f64.
    pub bank_before: Vec<Vec<f64>>,
    pub bank_after: Vec<Vec<f64>>,
    pub epochs: usize,
}

fn bank_values<T: Scalar>(net: &crate::model::WaveSpNet<T>) -> Vec<Vec<f64>> {
    net.bank.tensors().iter().map(|t| t.to_vec().iter().map(|v| v.as_f64()).collect()).collect()
}

/// Trains and evaluates one run per value; every run shares `base.train.seed`
/// and the same features.
pub fn ablate<T: Scalar>(
    base: &ExperimentConfig,
    axis: AblationAxis,
    values: &[String],
    train: &[UttFeatures<T>],
    dev: &[UttFeatures<T>],
    eval: &[UttFeatures<T>],
) -> Result<Vec<AblationRun>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("no values given for axis {axis}")));
    }
    let configs = values.iter().map(|v| apply_value(base, axis, v)).collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        let initial = crate::model::WaveSpNet::<T>::new(cfg.model_config()?, cfg.train.seed)?;
        let bank_before = bank_values(&initial);
        let outcome = train_on(&cfg, train, dev)?;
        let (_, report) = evaluate(&outcome.model, eval)?;
        runs.push(AblationRun {
            name,
            bank_after: bank_values(&outcome.model),
            bank_before,
            epochs: outcome.history.len(),
            config: cfg,
            report,
        });
    }
    Ok(runs)
}

/// Fixed-width comparison table.
pub fn table(runs: &[AblationRun]) -> String {
    let mut out = EvalReport::table_header();
    out.push('\n');
    for r in runs {
        out.push_str(&r.report.table_row(&r.name));
        out.push('\n');
    }
    out
}
