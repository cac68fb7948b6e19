//! Replicated rate experiments and log-log rate fits.
//!
//! Every replication draws from its own stream keyed by the seed, the index
//! of `N` in the grid and the replication index, so results do not depend on
//! the worker count or on scheduling order.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use oplearn_core::metrics::{
    conditional_risk_closed_form, conditional_risk_closed_form_colored, excess_risk, generalization_gap_emp,
    relative_error_diag, relative_error_matrix, weighted_energy, ErrorWeights,
};
use oplearn_core::posterior::{diag_posterior, diag_posterior_colored, galerkin_truth_matrix, matrix_posterior};
use oplearn_core::sampling::{
    draw_input_design, gen_matrix_dataset, replication_rng, sample_diagonal_statistics, Law, Purpose, StatsMethod,
};
use oplearn_core::spectra::{basis_overlap_matrix, truth_eigenvalues, ModelConfig, SpectralSequence, TruthKind};
use oplearn_core::theory::{
    colored_rate_exponent, excess_risk_lower_tail, gap_rate_exponent, j_n, RatePrediction,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Default share of the smallest sample sizes left out of the rate fit.
pub const DEFAULT_FIT_DROP_FRACTION: f64 = 0.25;

/// Smallest truncation level of an `N`-dependent rule.
pub const MIN_TRUNCATION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Posterior mean of the diagonal model.
    Diagonal,
    /// Row-wise posterior mean of the full matrix model.
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    /// `max(8, ⌈c J_N⌉)` with `J_N = ⌊N^(1/(2(α+p)))⌋`.
    NDependent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Relative squared test error of the posterior mean, weights `ϑ'²`.
    TestError,
    /// In-distribution excess risk, weights `ϑ²`.
    ExcessRisk,
    /// Absolute generalization gap of the posterior mean.
    GenGap,
    /// Noise-averaged relative test error given the design, in closed form.
    ConditionalClosedForm,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::TestError => "test_error",
            ErrorKind::ExcessRisk => "excess_risk",
            ErrorKind::GenGap => "gen_gap",
            ErrorKind::ConditionalClosedForm => "conditional_closed_form",
        }
    }
}

/// One rate experiment: a model, a truth, a sample-size grid and a
/// replication count.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub truth: TruthKind,
    pub model: ModelConfig,
    pub estimator: Estimator,
    pub error: ErrorKind,
    pub truncation: Truncation,
    pub n_grid: Vec<u64>,
    pub replications: usize,
    pub law: Law,
    pub stats: StatsMethod,
    pub seed: u64,
    pub fit_drop_fraction: f64,
    /// Rate `c` of the coefficient `a(z) = e^{cz}` of the matrix truth.
    pub a_rate: f64,
    pub oversampling: usize,
}

impl ExperimentConfig {
    /// Diagonal test-error experiment with the defaults of the desk tables.
    pub fn diagonal(name: impl Into<String>, truth: TruthKind, model: ModelConfig, n_grid: Vec<u64>) -> Self {
        Self {
            name: name.into(),
            truth,
            model,
            estimator: Estimator::Diagonal,
            error: ErrorKind::TestError,
            truncation: Truncation::Fixed(4096),
            n_grid,
            replications: 100,
            law: Law::Gaussian,
            stats: StatsMethod::ExactGaussian,
            seed: 0,
            fit_drop_fraction: DEFAULT_FIT_DROP_FRACTION,
            a_rate: -3.0,
            oversampling: oplearn_core::posterior::GALERKIN_OVERSAMPLING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(format!("experiment `{}`: {msg}", self.name)));
        if self.truth == TruthKind::Custom {
            return bad("custom truths are not supported by the harness".into());
        }
        if self.n_grid.len() < 2 {
            return bad("the sample-size grid needs at least two values".into());
        }
        if self.n_grid.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("the sample-size grid must be strictly increasing".into());
        }
        if self.replications < 2 {
            return bad("at least two replications are needed for a standard error".into());
        }
        if !(0.0..1.0).contains(&self.fit_drop_fraction) {
            return bad(format!("fit drop fraction {} must lie in [0, 1)", self.fit_drop_fraction));
        }
        match self.truncation {
            Truncation::Fixed(0) => return bad("truncation level must be positive".into()),
            Truncation::NDependent(c) if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("truncation multiplier {c} must be positive"))
            }
            _ => {}
        }
        if self.model.gamma() <= 0.0 {
            return bad("the noise scale must be positive".into());
        }
        if self.stats == StatsMethod::ExactGaussian && self.law != Law::Gaussian {
            return bad("exact statistic sampling needs the Gaussian design law".into());
        }
        if self.estimator == Estimator::Matrix {
            if self.error != ErrorKind::TestError {
                return bad("the matrix estimator supports only the test error".into());
            }
            if self.model.beta() != 0.0 {
                return bad("the matrix estimator supports only white noise".into());
            }
        }
        if self.error == ErrorKind::GenGap && self.model.beta() != 0.0 {
            return bad("the generalization gap is defined for white noise only".into());
        }
        self.prediction()?;
        Ok(())
    }

    /// Predicted convergence exponent of the configured error.
    pub fn prediction(&self) -> Result<RatePrediction> {
        let m = &self.model;
        let r = match self.error {
            ErrorKind::TestError | ErrorKind::ConditionalClosedForm => {
                colored_rate_exponent(m.alpha(), m.alpha_prime(), m.p(), m.s(), m.beta())
            }
            ErrorKind::ExcessRisk => colored_rate_exponent(m.alpha(), m.alpha(), m.p(), m.s(), m.beta()),
            ErrorKind::GenGap => gap_rate_exponent(m.alpha(), m.p()),
        };
        Ok(r?)
    }

    pub fn truncation_at(&self, n: u64) -> Result<usize> {
        truncation_level(self.truncation, self.model.alpha() - self.model.beta(), self.model.p(), n)
    }
}

/// Modes kept at sample size `n`.
pub fn truncation_level(rule: Truncation, alpha: f64, p: f64, n: u64) -> Result<usize> {
    match rule {
        Truncation::Fixed(j) => Ok(j),
        Truncation::NDependent(c) => {
            let jn = j_n(alpha, p, n)? as f64;
            Ok(MIN_TRUNCATION.max((c * jn).ceil() as usize))
        }
    }
}

/// Summary of the replications at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NPoint {
    pub n: u64,
    pub modes: usize,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub reps: usize,
    /// Lower-bound descriptor: the error mass the estimator cannot reach past
    /// `J_N`, on the same scale as `mean`.
    pub tail: Option<f64>,
    /// Largest row condition estimate of the matrix fits.
    pub max_condition: Option<f64>,
}

/// Ordinary least squares fit of `ln error` against `ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Negated slope.
    pub exponent: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when only two points are fitted.
    pub stderr: f64,
    pub points: usize,
    /// Set when two points were fitted and no standard error exists.
    pub degenerate: bool,
    pub n_min: u64,
    pub n_max: u64,
}

/// Fits `ln mean = intercept - exponent · ln N` over the given points.
pub fn fit_rate(points: &[(u64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(HarnessError::Fit(format!("need at least two points, got {}", points.len())));
    }
    if let Some((n, e)) = points.iter().find(|(n, e)| *n == 0 || !(*e > 0.0 && e.is_finite())) {
        return Err(HarnessError::Fit(format!("non-positive error {e} at N = {n}")));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all sample sizes coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let degenerate = points.len() == 2;
    let stderr = if degenerate {
        0.0
    } else {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (m - 2.0) / sxx).sqrt()
    };
    Ok(RateFit {
        exponent: -slope,
        intercept,
        stderr,
        points: points.len(),
        degenerate,
        n_min: points.iter().map(|p| p.0).min().unwrap_or(0),
        n_max: points.iter().map(|p| p.0).max().unwrap_or(0),
    })
}

/// Points kept after dropping the smallest `⌊fraction · len⌋` sample sizes,
/// never fewer than two.
pub fn fit_window(points: &[NPoint], fraction: f64) -> Vec<(u64, f64)> {
    let drop = ((points.len() as f64 * fraction).floor() as usize).min(points.len().saturating_sub(2));
    points[drop..].iter().map(|p| (p.n, p.mean)).collect()
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub config: ExperimentConfig,
    pub points: Vec<NPoint>,
    pub fit: RateFit,
    pub theory: RatePrediction,
}

/// Spectra shared by every replication at one truncation level.
struct DiagonalSetup {
    train: SpectralSequence,
    test: ErrorWeights,
    train_w: ErrorWeights,
    prior: SpectralSequence,
    noise: Option<SpectralSequence>,
    truth: Vec<f64>,
    test_energy: f64,
}

impl DiagonalSetup {
    fn new(cfg: &ExperimentConfig, modes: usize) -> Result<Self> {
        let m = &cfg.model;
        let train = m.train_spectrum(modes)?;
        let test = ErrorWeights::from(&m.test_spectrum(modes)?);
        let truth = truth_eigenvalues(cfg.truth, modes)?.eigenvalues().to_vec();
        let test_energy = weighted_energy(&truth, &test)?;
        Ok(Self {
            train_w: ErrorWeights::from(&train),
            train,
            test,
            prior: m.prior(modes)?,
            noise: m.noise_spectrum(modes)?,
            truth,
            test_energy,
        })
    }
}

struct MatrixSetup {
    truth: DMatrix<f64>,
    overlap: DMatrix<f64>,
    train: SpectralSequence,
    test: Vec<f64>,
}

struct Outcome {
    error: f64,
    condition: Option<f64>,
}

fn diagonal_replication(cfg: &ExperimentConfig, setup: &DiagonalSetup, n_index: usize, n: u64, rep: usize) -> Result<Outcome> {
    let (ni, r) = (n_index as u64, rep as u64);
    let mut design_rng = replication_rng(cfg.seed, ni, r, Purpose::Design);
    let mut noise_rng = replication_rng(cfg.seed, ni, r, Purpose::Noise);
    let gamma = cfg.model.gamma();
    let ds = sample_diagonal_statistics(
        &setup.train,
        &setup.truth,
        gamma,
        setup.noise.as_ref(),
        n as usize,
        cfg.law,
        cfg.stats,
        &mut design_rng,
        &mut noise_rng,
    )?;
    let error = match cfg.error {
        ErrorKind::ConditionalClosedForm => {
            let risk = match &setup.noise {
                None => conditional_risk_closed_form(&ds, &setup.prior, &setup.truth, &setup.test, gamma)?,
                Some(l) => conditional_risk_closed_form_colored(&ds, &setup.prior, &setup.truth, &setup.test, gamma, l)?,
            };
            risk.mean_error() / setup.test_energy
        }
        kind => {
            let post = match &setup.noise {
                None => diag_posterior(&ds, &setup.prior, gamma)?,
                Some(l) => diag_posterior_colored(&ds, &setup.prior, gamma, l)?,
            };
            match kind {
                ErrorKind::TestError => relative_error_diag(&post.mean, &setup.truth, &setup.test)?,
                ErrorKind::ExcessRisk => excess_risk(&post.mean, &setup.truth, &setup.train_w)?,
                _ => generalization_gap_emp(&ds, &post.mean, &setup.truth, &setup.train_w, gamma)?
                    .total()
                    .abs(),
            }
        }
    };
    Ok(Outcome { error, condition: None })
}

fn matrix_replication(cfg: &ExperimentConfig, setup: &MatrixSetup, n_index: usize, n: u64, rep: usize) -> Result<Outcome> {
    let (ni, r) = (n_index as u64, rep as u64);
    let mut design_rng = replication_rng(cfg.seed, ni, r, Purpose::Design);
    let mut noise_rng = replication_rng(cfg.seed, ni, r, Purpose::Noise);
    let x = draw_input_design(&setup.train, n as usize, cfg.law, &mut design_rng)?;
    let ds = gen_matrix_dataset(&setup.truth, &x, &setup.overlap, cfg.model.gamma(), &mut noise_rng)?;
    let fit = matrix_posterior(&ds, cfg.truth, cfg.model.z(), cfg.model.gamma())?;
    let condition = fit.diagnostics.iter().map(|d| d.condition_estimate).fold(0.0, f64::max);
    Ok(Outcome {
        error: relative_error_matrix(&fit.rows, &setup.truth, &setup.test)?,
        condition: Some(condition),
    })
}

/// Lower-bound descriptor at `n`, or `None` where none applies.
fn tail_descriptor(cfg: &ExperimentConfig, setup: &DiagonalSetup, n: u64) -> Result<Option<f64>> {
    let m = &cfg.model;
    let alpha = m.alpha() - m.beta();
    Ok(match cfg.error {
        ErrorKind::TestError | ErrorKind::ConditionalClosedForm => {
            let jn = j_n(alpha, m.p(), n)?;
            let tail: f64 = setup
                .truth
                .iter()
                .zip(setup.test.values())
                .skip(jn)
                .map(|(l, w)| w * l * l)
                .sum();
            Some(tail / setup.test_energy)
        }
        ErrorKind::ExcessRisk => Some(excess_risk_lower_tail(alpha, m.p(), &setup.truth, n)?),
        ErrorKind::GenGap => None,
    })
}

fn summarize(n: u64, modes: usize, outcomes: &[Outcome], tail: Option<f64>) -> NPoint {
    let reps = outcomes.len();
    let mut errs: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let mean = errs.iter().sum::<f64>() / reps as f64;
    let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps as f64 - 1.0);
    errs.sort_by(f64::total_cmp);
    let median = if reps % 2 == 1 {
        errs[reps / 2]
    } else {
        0.5 * (errs[reps / 2 - 1] + errs[reps / 2])
    };
    let max_condition = outcomes
        .iter()
        .filter_map(|o| o.condition)
        .reduce(f64::max);
    NPoint {
        n,
        modes,
        mean,
        stderr: (var / reps as f64).sqrt(),
        median,
        reps,
        tail,
        max_condition,
    }
}

/// Builds a pool with exactly `workers` threads.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(HarnessError::Config("worker count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every replication at every sample size and fits the rate.
pub fn run_experiment(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<RateReport> {
    cfg.validate()?;
    let theory = cfg.prediction()?;
    let modes: Vec<usize> = cfg.n_grid.iter().map(|n| cfg.truncation_at(*n)).collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.replications).map(move |r| (i, r)))
        .collect();

    let (outcomes, tails) = match cfg.estimator {
        Estimator::Diagonal => {
            let mut setups: HashMap<usize, Arc<DiagonalSetup>> = HashMap::new();
            for j in &modes {
                if !setups.contains_key(j) {
                    setups.insert(*j, Arc::new(DiagonalSetup::new(cfg, *j)?));
                }
            }
            let tails = cfg
                .n_grid
                .iter()
                .zip(&modes)
                .map(|(n, j)| tail_descriptor(cfg, &setups[j], *n))
                .collect::<Result<Vec<_>>>()?;
            let outcomes = pool.install(|| {
                tasks
                    .par_iter()
                    .map(|&(i, r)| diagonal_replication(cfg, &setups[&modes[i]], i, cfg.n_grid[i], r))
                    .collect::<Result<Vec<_>>>()
            })?;
            (outcomes, tails)
        }
        Estimator::Matrix => {
            let mut setups: HashMap<usize, Arc<MatrixSetup>> = HashMap::new();
            for j in &modes {
                if !setups.contains_key(j) {
                    let setup = MatrixSetup {
                        truth: galerkin_truth_matrix(cfg.truth, cfg.a_rate, *j, cfg.oversampling)?,
                        overlap: basis_overlap_matrix(*j, *j),
                        train: cfg.model.train_spectrum(*j)?,
                        test: cfg.model.test_spectrum(*j)?.values().to_vec(),
                    };
                    setups.insert(*j, Arc::new(setup));
                }
            }
            let outcomes = pool.install(|| {
                tasks
                    .par_iter()
                    .map(|&(i, r)| matrix_replication(cfg, &setups[&modes[i]], i, cfg.n_grid[i], r))
                    .collect::<Result<Vec<_>>>()
            })?;
            (outcomes, vec![None; cfg.n_grid.len()])
        }
    };

    let points: Vec<NPoint> = outcomes
        .chunks(cfg.replications)
        .enumerate()
        .map(|(i, chunk)| summarize(cfg.n_grid[i], modes[i], chunk, tails[i]))
        .collect();
    let fit = fit_rate(&fit_window(&points, cfg.fit_drop_fraction))?;
    Ok(RateReport {
        config: cfg.clone(),
        points,
        fit,
        theory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(error: ErrorKind) -> ExperimentConfig {
        let model = ModelConfig::for_truth(TruthKind::Identity, 4.5, 4.5, 0.0).unwrap();
        let mut cfg = ExperimentConfig::diagonal("t", TruthKind::Identity, model, vec![16, 64, 256, 1024]);
        cfg.truncation = Truncation::Fixed(64);
        cfg.replications = 8;
        cfg.error = error;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn fit_recovers_an_exact_power() {
        let pts: Vec<(u64, f64)> = [16u64, 64, 256, 1024].iter().map(|n| (*n, 3.0 * (*n as f64).powf(-0.75))).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.exponent - 0.75).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.stderr < 1e-12 && !f.degenerate);
    }

    #[test]
    fn two_point_fit_is_flagged() {
        let f = fit_rate(&[(10, 1.0), (100, 0.1)]).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.stderr, 0.0);
        assert!((f.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_nonpositive_errors() {
        assert!(fit_rate(&[(10, 1.0), (100, 0.0), (1000, 0.1)]).is_err());
        assert!(fit_rate(&[(10, 1.0)]).is_err());
    }

    #[test]
    fn window_drops_the_smallest_quarter() {
        let pts: Vec<NPoint> = (4..=12)
            .map(|e| summarize(1 << e, 8, &[Outcome { error: 1.0, condition: None }, Outcome { error: 1.0, condition: None }], None))
            .collect();
        let w = fit_window(&pts, 0.25);
        assert_eq!(w.len(), 7);
        assert_eq!(w[0].0, 1 << 6);
        assert_eq!(fit_window(&pts[..3], 0.9).len(), 2);
    }

    #[test]
    fn n_dependent_truncation_has_a_floor() {
        let rule = Truncation::NDependent(1.0);
        assert_eq!(truncation_level(rule, 4.5, 2.0, 16).unwrap(), MIN_TRUNCATION);
        let c = 16384.0 / 18.0;
        assert_eq!(truncation_level(Truncation::NDependent(c), 2.0, 0.5, 1 << 21).unwrap(), 16384);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = small(ErrorKind::TestError);
        let a = run_experiment(&cfg, &worker_pool(1).unwrap()).unwrap();
        let b = run_experiment(&cfg, &worker_pool(3).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_error_kind_runs() {
        for kind in [ErrorKind::TestError, ErrorKind::ExcessRisk, ErrorKind::GenGap, ErrorKind::ConditionalClosedForm] {
            let r = run_experiment(&small(kind), &worker_pool(1).unwrap()).unwrap();
            assert!(r.points.iter().all(|p| p.mean > 0.0 && p.stderr.is_finite()), "{kind:?}");
            assert_eq!(r.points[0].tail.is_some(), kind != ErrorKind::GenGap);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small(ErrorKind::TestError);
        cfg.n_grid = vec![64, 16];
        assert!(cfg.validate().is_err());
        let mut cfg = small(ErrorKind::TestError);
        cfg.law = Law::Uniform;
        assert!(cfg.validate().is_err());
        let mut cfg = small(ErrorKind::GenGap);
        cfg.estimator = Estimator::Matrix;
        assert!(cfg.validate().is_err());
    }
}
