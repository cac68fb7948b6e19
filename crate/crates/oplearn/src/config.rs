//! TOML experiment files.
//!
//! A file holds an optional `[defaults]` table and one `[[experiment]]` table
//! per experiment; every key may appear in either place and experiment keys
//! win. Unknown keys and malformed values are reported with their line.
//!
//! ```toml
//! [defaults]
//! alpha = 4.5
//! alpha_prime = 4.5
//! n_log2 = [4, 12]
//! replications = 100
//! truncation = { fixed = 4096 }
//!
//! [[experiment]]
//! name = "forward_rough"
//! truth = "neg_laplacian"
//! z = -0.75
//! ```

use std::path::Path;

use oplearn_core::sampling::{Law, StatsMethod};
use oplearn_core::spectra::{ModelConfig, TruthKind};
use serde::Deserialize;
use toml::Spanned;

use crate::error::{io_err, HarnessError, Result};
use crate::harness::{ErrorKind, Estimator, ExperimentConfig, Truncation, DEFAULT_FIT_DROP_FRACTION};

/// Configurations shipped with the binary, addressable by name.
pub const BUILTIN: [(&str, &str); 4] = [
    ("table1_desk", include_str!("../configs/table1_desk.toml")),
    ("table2_desk", include_str!("../configs/table2_desk.toml")),
    ("fig6_nondiag_desk", include_str!("../configs/fig6_nondiag_desk.toml")),
    ("gap_desk", include_str!("../configs/gap_desk.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TruthName {
    #[serde(alias = "A")]
    NegLaplacian,
    #[serde(alias = "id")]
    Identity,
    #[serde(alias = "A_inv")]
    InvNegLaplacian,
}

impl From<TruthName> for TruthKind {
    fn from(t: TruthName) -> Self {
        match t {
            TruthName::NegLaplacian => TruthKind::NegLaplacian,
            TruthName::Identity => TruthKind::Identity,
            TruthName::InvNegLaplacian => TruthKind::InvNegLaplacian,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LawName {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StatsName {
    Exact,
    Streaming,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum TruncationSpec {
    Fixed(usize),
    NDependent(f64),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    name: Option<String>,
    truth: Option<TruthName>,
    alpha: Option<f64>,
    alpha_prime: Option<f64>,
    z: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    tau3: Option<f64>,
    estimator: Option<Estimator>,
    error: Option<ErrorKind>,
    truncation: Option<TruncationSpec>,
    n_grid: Option<Vec<u64>>,
    n_log2: Option<[u32; 2]>,
    replications: Option<usize>,
    law: Option<LawName>,
    stats: Option<StatsName>,
    seed: Option<u64>,
    fit_drop_fraction: Option<f64>,
    a_rate: Option<f64>,
    oversampling: Option<usize>,
}

macro_rules! merge {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Section {
    fn inherit(mut self, d: &Section) -> Section {
        merge!(self, d; name, truth, alpha, alpha_prime, z, beta, gamma, tau1, tau2, tau3, estimator, error,
            truncation, n_grid, n_log2, replications, law, stats, seed, fit_drop_fraction, a_rate, oversampling);
        self
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    defaults: Section,
    #[serde(default)]
    experiment: Vec<Spanned<Section>>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Parses a configuration text into experiments.
pub fn parse(src: &str) -> Result<Vec<ExperimentConfig>> {
    let file: File = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| format!("line {}: ", line_of(src, s.start))).unwrap_or_default();
        HarnessError::Config(format!("{line}{}", e.message()))
    })?;
    if file.experiment.is_empty() {
        return Err(HarnessError::Config("no [[experiment]] tables".into()));
    }
    let mut out: Vec<ExperimentConfig> = Vec::with_capacity(file.experiment.len());
    for spanned in file.experiment {
        let line = line_of(src, spanned.span().start);
        let sec = spanned.into_inner().inherit(&file.defaults);
        let cfg = build(sec).map_err(|msg| HarnessError::Config(format!("line {line}: {msg}")))?;
        if out.iter().any(|c| c.name == cfg.name) {
            return Err(HarnessError::Config(format!("line {line}: duplicate experiment name `{}`", cfg.name)));
        }
        cfg.validate().map_err(|e| HarnessError::Config(format!("line {line}: {e}")))?;
        out.push(cfg);
    }
    Ok(out)
}

fn need<T>(v: Option<T>, key: &str) -> std::result::Result<T, String> {
    v.ok_or_else(|| format!("missing key `{key}`"))
}

fn build(s: Section) -> std::result::Result<ExperimentConfig, String> {
    let name = need(s.name, "name")?;
    let truth: TruthKind = need(s.truth, "truth")?.into();
    let alpha = need(s.alpha, "alpha")?;
    let alpha_prime = need(s.alpha_prime, "alpha_prime")?;
    let z = need(s.z, "z")?;
    let core = |key: &str, e: oplearn_core::Error| format!("`{key}`: {e}");
    let mut model = ModelConfig::for_truth(truth, alpha, alpha_prime, z).map_err(|e| core("z", e))?;
    if let Some(g) = s.gamma {
        model = model.with_gamma(g).map_err(|e| core("gamma", e))?;
    }
    if let Some(b) = s.beta {
        model = model.with_noise_smoothness(b).map_err(|e| core("beta", e))?;
    }
    if s.tau1.is_some() || s.tau2.is_some() || s.tau3.is_some() {
        let (t1, t2, t3) = (s.tau1.unwrap_or(model.tau1()), s.tau2.unwrap_or(model.tau2()), s.tau3.unwrap_or(model.tau3()));
        model = model.with_length_scales(t1, t2, t3).map_err(|e| core("tau1/tau2/tau3", e))?;
    }
    let n_grid = match (s.n_grid, s.n_log2) {
        (Some(_), Some(_)) => return Err("give either `n_grid` or `n_log2`, not both".into()),
        (Some(g), None) => g,
        (None, Some([lo, hi])) => {
            if lo > hi || hi > 62 {
                return Err(format!("`n_log2` range [{lo}, {hi}] is invalid"));
            }
            (lo..=hi).map(|e| 1u64 << e).collect()
        }
        (None, None) => return Err("missing key `n_grid` or `n_log2`".into()),
    };
    let law = match s.law.unwrap_or(LawName::Gaussian) {
        LawName::Gaussian => Law::Gaussian,
        LawName::Uniform => Law::Uniform,
        LawName::Rademacher => Law::Rademacher,
    };
    let stats = match s.stats {
        Some(StatsName::Exact) => StatsMethod::ExactGaussian,
        Some(StatsName::Streaming) => StatsMethod::Streaming,
        None if law == Law::Gaussian => StatsMethod::ExactGaussian,
        None => StatsMethod::Streaming,
    };
    let truncation = match s.truncation.unwrap_or(TruncationSpec::Fixed(4096)) {
        TruncationSpec::Fixed(j) => Truncation::Fixed(j),
        TruncationSpec::NDependent(c) => Truncation::NDependent(c),
    };
    let mut cfg = ExperimentConfig::diagonal(name, truth, model, n_grid);
    cfg.estimator = s.estimator.unwrap_or(Estimator::Diagonal);
    cfg.error = s.error.unwrap_or(ErrorKind::TestError);
    cfg.truncation = truncation;
    cfg.replications = s.replications.unwrap_or(cfg.replications);
    cfg.law = law;
    cfg.stats = stats;
    cfg.seed = s.seed.unwrap_or(0);
    cfg.fit_drop_fraction = s.fit_drop_fraction.unwrap_or(DEFAULT_FIT_DROP_FRACTION);
    cfg.a_rate = s.a_rate.unwrap_or(cfg.a_rate);
    cfg.oversampling = s.oversampling.unwrap_or(cfg.oversampling);
    Ok(cfg)
}

/// Reads a file, or a shipped configuration when `spec` names one and no
/// such file exists. Returns the experiments and the source text.
pub fn load(spec: &str) -> Result<(Vec<ExperimentConfig>, String)> {
    let path = Path::new(spec);
    let src = if path.exists() {
        std::fs::read_to_string(path).map_err(io_err(path))?
    } else if let Some(src) = builtin(spec) {
        src.to_string()
    } else {
        return Err(HarnessError::Config(format!(
            "`{spec}` is neither a file nor a shipped config ({})",
            BUILTIN.map(|b| b.0).join(", ")
        )));
    };
    let cfgs = parse(&src).map_err(|e| match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{spec}: {m}")),
        other => other,
    })?;
    Ok((cfgs, src))
}
