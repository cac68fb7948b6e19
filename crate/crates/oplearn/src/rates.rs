//! Rate-exponent sweeps, theory tables and cross-basis covariance decay.

use std::fmt::Write as _;

use oplearn_core::spectra::{cross_basis_variance, matern_value, TruthKind, CROSS_BASIS_DEFAULT_TERMS};
use oplearn_core::theory::{colored_rate_exponent, RatePrediction, Smoothness};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::harness::fit_rate;
use crate::output::{dominant_term_name, fmt_f64, log_factor_name};

pub const SWEEP_SCHEMA: &str = "oplearn.rate_sweep.v1";
pub const COVDECAY_SCHEMA: &str = "oplearn.covdecay.v1";

/// Status written for parameter points outside the smoothness range.
pub const INVALID: &str = "invalid(A5)";

/// Prior shifts of the rough, matching and smooth columns.
pub const PRIOR_SHIFTS: [f64; 3] = [-0.75, 0.0, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Alpha,
    AlphaPrime,
    Z,
}

impl SweepVar {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "alpha" => Some(SweepVar::Alpha),
            "alpha_prime" | "alpha'" => Some(SweepVar::AlphaPrime),
            "z" => Some(SweepVar::Z),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Alpha => "alpha",
            SweepVar::AlphaPrime => "alpha_prime",
            SweepVar::Z => "z",
        }
    }
}

/// Fixed parameters of a sweep; the swept one is overwritten per point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub truth: TruthKind,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub z: f64,
    pub beta: f64,
}

impl RatePoint {
    pub fn smoothness(&self) -> Result<Smoothness> {
        let s = self
            .truth
            .s_star()
            .ok_or_else(|| HarnessError::Config("sweeps need a canonical truth".into()))?;
        let mut sm = Smoothness::new(self.alpha, self.alpha_prime, s + 0.5 + self.z, s);
        sm.beta = self.beta;
        Ok(sm)
    }

    /// Predicted test-error exponent, or `None` outside the valid range.
    pub fn prediction(&self) -> Result<Option<RatePrediction>> {
        let sm = self.smoothness()?;
        if self.alpha <= 0.5 || self.alpha_prime < 0.0 || self.beta < 0.0 {
            return Ok(None);
        }
        Ok(colored_rate_exponent(sm.alpha, sm.alpha_prime, sm.p, sm.s, sm.beta).ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: RatePoint,
    pub value: f64,
    pub prediction: Option<RatePrediction>,
}

/// `steps` evenly spaced values of `var` from `from` to `to`, inclusive.
pub fn sweep(base: RatePoint, var: SweepVar, from: f64, to: f64, steps: usize) -> Result<Vec<SweepRow>> {
    if steps < 2 || !(from.is_finite() && to.is_finite()) {
        return Err(HarnessError::Config("a sweep needs finite bounds and at least two steps".into()));
    }
    (0..steps)
        .map(|i| {
            let value = from + (to - from) * i as f64 / (steps - 1) as f64;
            let mut point = base;
            match var {
                SweepVar::Alpha => point.alpha = value,
                SweepVar::AlphaPrime => point.alpha_prime = value,
                SweepVar::Z => point.z = value,
            }
            Ok(SweepRow {
                point,
                value,
                prediction: point.prediction()?,
            })
        })
        .collect()
}

pub fn sweep_csv(var: SweepVar, rows: &[SweepRow]) -> Result<String> {
    let mut s = format!("# schema={SWEEP_SCHEMA} sweep={}\n", var.name());
    s.push_str("truth,value,alpha,alpha_prime,z,beta,p,s,exponent,log_factor,dominant_term,status\n");
    for r in rows {
        let pt = r.point;
        let sm = pt.smoothness()?;
        let (e, l, d, status) = match &r.prediction {
            Some(p) => (
                fmt_f64(p.exponent),
                log_factor_name(p.log_factor),
                dominant_term_name(p.dominant_term),
                "ok",
            ),
            None => (String::new(), "", "", INVALID),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{e},{l},{d},{status}",
            pt.truth.name(),
            fmt_f64(r.value),
            fmt_f64(pt.alpha),
            fmt_f64(pt.alpha_prime),
            fmt_f64(pt.z),
            fmt_f64(pt.beta),
            fmt_f64(sm.p),
            fmt_f64(sm.s)
        );
    }
    Ok(s)
}

/// Theory columns of the in-distribution table (`which = 1`, `α' = 4.5`) or
/// the distribution-shift table (`which = 2`, `α' ∈ {4, 5.25}`), `α = 4.5`.
pub fn theory_table(which: u8) -> Result<Vec<SweepRow>> {
    let test_smoothness: &[f64] = match which {
        1 => &[4.5],
        2 => &[4.0, 5.25],
        _ => return Err(HarnessError::Config(format!("no theory table {which}; use 1 or 2"))),
    };
    let mut rows = Vec::new();
    for truth in TruthKind::CANONICAL {
        for &alpha_prime in test_smoothness {
            for z in PRIOR_SHIFTS {
                let point = RatePoint {
                    truth,
                    alpha: 4.5,
                    alpha_prime,
                    z,
                    beta: 0.0,
                };
                rows.push(SweepRow {
                    point,
                    value: z,
                    prediction: point.prediction()?,
                });
            }
        }
    }
    Ok(rows)
}

/// Output-basis variances of a sine-basis Matérn field.
#[derive(Debug, Clone, PartialEq)]
pub struct CovDecay {
    pub alpha_tilde: f64,
    pub tau: f64,
    pub terms: usize,
    pub modes: Vec<usize>,
    pub variances: Vec<f64>,
    pub last_terms: Vec<f64>,
    /// Negated log-log slope over the fit range.
    pub fitted_exponent: f64,
    pub fit_range: (usize, usize),
}

impl CovDecay {
    /// `2 min(α̃, 2)`.
    pub fn predicted_exponent(&self) -> f64 {
        2.0 * self.alpha_tilde.min(2.0)
    }
}

/// Geometric grid of distinct modes, `per_octave` points per doubling.
pub fn log_grid(lo: usize, hi: usize, per_octave: usize) -> Vec<usize> {
    let steps = ((hi as f64 / lo as f64).log2() * per_octave as f64).round() as usize;
    let mut v: Vec<usize> = (0..=steps)
        .map(|i| (lo as f64 * 2f64.powf(i as f64 / per_octave as f64)).round() as usize)
        .collect();
    v.dedup();
    v
}

/// Evaluates `ϑ_j²` on a log grid up to `j_max` and fits its decay over
/// `fit_range`.
pub fn covdecay(
    alpha_tilde: f64,
    tau: f64,
    j_max: usize,
    terms: usize,
    fit_range: (usize, usize),
    pool: &rayon::ThreadPool,
) -> Result<CovDecay> {
    if !(alpha_tilde > 0.5) {
        return Err(HarnessError::Config(format!("α̃ = {alpha_tilde} must exceed 1/2")));
    }
    if terms == 0 || j_max == 0 || fit_range.0 == 0 || fit_range.0 >= fit_range.1 || fit_range.1 > j_max {
        return Err(HarnessError::Config("need 1 <= fit_min < fit_max <= j_max and K >= 1".into()));
    }
    let lam: Vec<f64> = (1..=terms).map(|k| matern_value(tau, alpha_tilde, k)).collect();
    let mut modes = log_grid(1, j_max, 4);
    modes.extend(log_grid(fit_range.0, fit_range.1, 4));
    modes.sort_unstable();
    modes.dedup();
    let sums = pool.install(|| {
        modes
            .par_iter()
            .map(|j| cross_basis_variance(&lam, *j, terms))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let pts: Vec<(u64, f64)> = modes
        .iter()
        .zip(&sums)
        .filter(|(j, _)| (fit_range.0..=fit_range.1).contains(*j))
        .map(|(j, s)| (*j as u64, s.value))
        .collect();
    let fit = fit_rate(&pts)?;
    Ok(CovDecay {
        alpha_tilde,
        tau,
        terms,
        variances: sums.iter().map(|s| s.value).collect(),
        last_terms: sums.iter().map(|s| s.last_term).collect(),
        modes,
        fitted_exponent: fit.exponent,
        fit_range,
    })
}

/// Default summation count of the cross-basis series.
pub const COVDECAY_TERMS: usize = CROSS_BASIS_DEFAULT_TERMS;

pub fn covdecay_csv(d: &CovDecay) -> String {
    let mut s = format!(
        "# schema={COVDECAY_SCHEMA} alpha_tilde={} tau={} terms={}\n",
        fmt_f64(d.alpha_tilde),
        fmt_f64(d.tau),
        d.terms
    );
    s.push_str("j,theta_sq,last_term\n");
    for ((j, v), t) in d.modes.iter().zip(&d.variances).zip(&d.last_terms) {
        let _ = writeln!(s, "{j},{},{}", fmt_f64(*v), fmt_f64(*t));
    }
    s
}
