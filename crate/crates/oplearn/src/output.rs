//! CSV, JSON and manifest artifacts.
//!
//! Floats are written in shortest round-trip form so reruns with the same
//! seed are byte-identical. Every CSV starts with a `# schema=` line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use oplearn_core::theory::{DominantTerm, LogFactor, RatePrediction};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};
use crate::harness::{RateReport, Truncation};

pub const REPORT_SCHEMA: &str = "oplearn.rate_report.v1";
pub const SUMMARY_SCHEMA: &str = "oplearn.rate_summary.v1";
pub const MANIFEST_SCHEMA: &str = "oplearn.manifest.v1";

/// Shortest round-trip representation; empty for `None`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn log_factor_name(l: LogFactor) -> &'static str {
    match l {
        LogFactor::None => "none",
        LogFactor::LogN => "log_n",
    }
}

pub fn dominant_term_name(d: DominantTerm) -> &'static str {
    match d {
        DominantTerm::Variance => "variance",
        DominantTerm::Bias => "bias",
        DominantTerm::Fluctuation => "fluctuation",
    }
}

pub fn prediction_json(r: &RatePrediction) -> Value {
    json!({
        "exponent": r.exponent,
        "log_factor": log_factor_name(r.log_factor),
        "dominant_term": dominant_term_name(r.dominant_term),
    })
}

/// Per-`N` table of one report.
pub fn report_csv(r: &RateReport) -> String {
    let mut s = format!("# schema={REPORT_SCHEMA} experiment={}\n", r.config.name);
    s.push_str("N,J,mean_error,stderr,median,reps,tail,max_condition\n");
    for p in &r.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.n,
            p.modes,
            fmt_f64(p.mean),
            fmt_f64(p.stderr),
            fmt_f64(p.median),
            p.reps,
            fmt_opt(p.tail),
            fmt_opt(p.max_condition)
        );
    }
    s
}

pub fn report_json(r: &RateReport) -> Value {
    let c = &r.config;
    let m = &c.model;
    let truncation = match c.truncation {
        Truncation::Fixed(j) => json!({ "fixed": j }),
        Truncation::NDependent(f) => json!({ "n_dependent": f }),
    };
    json!({
        "schema": REPORT_SCHEMA,
        "name": c.name,
        "truth": c.truth.name(),
        "estimator": c.estimator,
        "error": c.error.name(),
        "model": {
            "alpha": m.alpha(), "alpha_prime": m.alpha_prime(), "p": m.p(), "s": m.s(), "z": m.z(),
            "tau1": m.tau1(), "tau2": m.tau2(), "tau3": m.tau3(), "gamma": m.gamma(), "beta": m.beta(),
        },
        "truncation": truncation,
        "n_grid": c.n_grid,
        "replications": c.replications,
        "law": c.law.name(),
        "stats": format!("{:?}", c.stats),
        "seed": c.seed,
        "fit_drop_fraction": c.fit_drop_fraction,
        "a_rate": c.a_rate,
        "oversampling": c.oversampling,
        "theory": prediction_json(&r.theory),
        "fit": r.fit,
        "points": r.points,
    })
}

/// One line per experiment: theory next to the fitted exponent.
pub fn summary_csv(reports: &[RateReport]) -> String {
    let mut s = format!("# schema={SUMMARY_SCHEMA}\n");
    s.push_str("experiment,truth,estimator,error,alpha,alpha_prime,z,beta,theory_exponent,log_factor,fitted_exponent,fit_stderr,fit_n_min,fit_n_max,fit_degenerate\n");
    for r in reports {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.name,
            c.truth.name(),
            match c.estimator {
                crate::harness::Estimator::Diagonal => "diagonal",
                crate::harness::Estimator::Matrix => "matrix",
            },
            c.error.name(),
            fmt_f64(c.model.alpha()),
            fmt_f64(c.model.alpha_prime()),
            fmt_f64(c.model.z()),
            fmt_f64(c.model.beta()),
            fmt_f64(r.theory.exponent),
            log_factor_name(r.theory.log_factor),
            fmt_f64(r.fit.exponent),
            fmt_f64(r.fit.stderr),
            r.fit.n_min,
            r.fit.n_max,
            r.fit.degenerate
        );
    }
    s
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Records every artifact written to an output directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub tool: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<ManifestEntry>,
    #[serde(skip)]
    dir: PathBuf,
}

impl Manifest {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            schema: MANIFEST_SCHEMA,
            tool: format!("oplearn {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed: None,
            config: None,
            config_sha256: None,
            started_unix: unix_now(),
            finished_unix: 0,
            files: Vec::new(),
            dir: dir.to_path_buf(),
        })
    }

    pub fn with_config(mut self, name: &str, source: &str, seed: u64) -> Self {
        self.config = Some(name.to_string());
        self.config_sha256 = Some(sha256_hex(source.as_bytes()));
        self.seed = Some(seed);
        self
    }

    /// Writes `contents` to `name` inside the output directory and records it.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Per-experiment CSV and JSON files.
    pub fn write_report(&mut self, r: &RateReport) -> Result<()> {
        self.write(&format!("{}.csv", r.config.name), &report_csv(r))?;
        self.write_json(&format!("{}.json", r.config.name), &report_json(r))?;
        Ok(())
    }

    /// Writes `manifest.json` last.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.finished_unix = unix_now();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}
