//! Self-checks of the library against independent reference computations.
//!
//! Each suite returns one [`Check`] per property with the observed worst
//! discrepancy and its tolerance.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use oplearn_core::metrics::{conditional_risk_closed_form, generalization_gap_emp, ErrorWeights, GapTerms};
use oplearn_core::posterior::{diag_posterior, galerkin_truth_matrix, matrix_posterior_row, sample_posterior};
use oplearn_core::sampling::{draw_design, gen_diagonal_dataset, make_rng, Dataset, Law, SimRng};
use oplearn_core::spectra::{basis_overlap, matern_spectrum, TruthKind};
use oplearn_core::theory::{head_sum, head_sum_order, tail_envelope};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HarnessError, Result};
use crate::rates::theory_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Identities,
    Lemmas,
    Parseval,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracle, Suite::Identities, Suite::Lemmas, Suite::Parseval];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(Suite::Oracle),
            "identities" => Some(Suite::Identities),
            "lemmas" => Some(Suite::Lemmas),
            "parseval" => Some(Suite::Parseval),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Identities => "identities",
            Suite::Lemmas => "lemmas",
            Suite::Parseval => "parseval",
        }
    }
}

/// Deliberate defects used to confirm that the suites catch errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Flips the sign of the design-fluctuation term of the gap.
    GapJ2Sign,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Fault::None),
            "gap-j2-sign" => Some(Fault::GapJ2Sign),
            _ => None,
        }
    }
}

/// Sizes of the randomized checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Random instances of the algebraic identities.
    pub instances: usize,
    /// Designs of the Monte Carlo risk check.
    pub risk_configs: usize,
    /// Noise draws per design of the Monte Carlo risk check.
    pub noise_draws: usize,
    pub fault: Fault,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 1000,
            risk_configs: 50,
            noise_draws: 10_000,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: &'static str,
    /// Worst discrepancy, on the scale of `tolerance`.
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(suite: Suite, name: &'static str, observed: f64, tolerance: f64, detail: String) -> Self {
        Self {
            suite,
            name,
            observed,
            tolerance,
            passed: observed <= tolerance,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{} observed={:.3e} tol={:.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.observed,
            self.tolerance,
            self.detail
        )
    }
}

pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> Result<Vec<Check>> {
    match suite {
        Suite::Oracle => oracle_suite(opts),
        Suite::Identities => identities_suite(opts),
        Suite::Lemmas => lemmas_suite(),
        Suite::Parseval => Ok(parseval_suite()),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Composite Simpson rule on `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn cos_mode(j: usize, z: f64) -> f64 {
    2f64.sqrt() * ((j as f64 - 0.5) * PI * z).cos()
}

fn sin_mode(k: usize, z: f64) -> f64 {
    2f64.sqrt() * (k as f64 * PI * z).sin()
}

/// Posterior of the stacked linear model `vec(y) = G ℓ + γ ξ` by explicit
/// inversion of the dense precision.
fn dense_conjugate(g: &DMatrix<f64>, y: &DMatrix<f64>, prior: &[f64], gamma: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let (j, n) = g.shape();
    let mut fwd = DMatrix::zeros(j * n, j);
    let mut obs = DVector::zeros(j * n);
    for m in 0..j {
        for s in 0..n {
            fwd[(m * n + s, m)] = g[(m, s)];
            obs[m * n + s] = y[(m, s)];
        }
    }
    let g2 = gamma * gamma;
    let prec = DMatrix::from_diagonal(&DVector::from_iterator(j, prior.iter().map(|v| 1.0 / v))) + fwd.transpose() * &fwd / g2;
    let cov = prec.try_inverse()?;
    let mean = &cov * fwd.transpose() * obs / g2;
    Some((mean, cov.diagonal()))
}

/// Minimizer of `(1/N)‖y - Xᵀr‖² + (γ²/N) rᵀΣ⁻¹r` via QR of the stacked
/// least-squares system.
fn ridge_by_qr(x: &DMatrix<f64>, y: &DVector<f64>, prior: &[f64], gamma: f64) -> Option<DVector<f64>> {
    let (j, n) = x.shape();
    let mut a = DMatrix::zeros(n + j, j);
    let mut b = DVector::zeros(n + j);
    a.view_mut((0, 0), (n, j)).copy_from(&x.transpose());
    b.rows_mut(0, n).copy_from(y);
    for k in 0..j {
        a[(n + k, k)] = gamma / prior[k].sqrt();
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb)
}

fn random_diagonal_instance(rng: &mut SimRng, max_modes: usize, max_n: usize) -> Result<(Vec<f64>, Dataset, oplearn_core::spectra::SpectralSequence, f64)> {
    let j = rng.random_range(1..=max_modes);
    let n = rng.random_range(1..=max_n);
    let gamma = 10f64.powf(rng.random_range(-2.0..0.5));
    let spec = matern_spectrum(rng.random_range(1.0..10.0), rng.random_range(0.6..2.5), j)?;
    let truth: Vec<f64> = (0..j).map(|_| rng.random_range(-3.0..3.0)).collect();
    let design = draw_design(&spec, n, Law::Gaussian, rng)?;
    let ds = gen_diagonal_dataset(&truth, &design, gamma, rng)?;
    Ok((truth, ds, spec, gamma))
}

fn oracle_suite(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut rng = make_rng(opts.seed, 101);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.instances {
        let (_, ds, _, gamma) = random_diagonal_instance(&mut rng, 8, 16)?;
        let prior = matern_spectrum(1.0, rng.random_range(-1.0..1.5), ds.modes())?;
        let post = diag_posterior(&ds, &prior, gamma)?;
        let design = ds.design().ok_or_else(|| HarnessError::Config("raw design missing".into()))?;
        let outputs = ds.outputs().ok_or_else(|| HarnessError::Config("raw outputs missing".into()))?;
        let (mean, var) = dense_conjugate(design.coeffs(), outputs, prior.values(), gamma)
            .ok_or_else(|| HarnessError::Config("dense precision is singular".into()))?;
        for m in 0..ds.modes() {
            worst = worst.max(rel(post.mean[m], mean[m])).max(rel(post.variance[m], var[m]));
        }
    }
    checks.push(Check::bound(
        Suite::Oracle,
        "diagonal_posterior_dense",
        worst,
        1e-10,
        format!("{} instances, worst relative deviation of mean and variance", opts.instances),
    ));

    let mut rng = make_rng(opts.seed, 102);
    let mut worst: f64 = 0.0;
    let rows = opts.instances.min(200);
    for _ in 0..rows {
        let j = rng.random_range(1..=6);
        let n = rng.random_range(1..=3 * j + 2);
        let x = DMatrix::from_fn(j, n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let prior: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..3.0)).collect();
        let gamma = rng.random_range(0.1..2.0);
        let nf = n as f64;
        let gram = &x * x.transpose() / nf;
        let rhs = &x * &y / nf;
        let (row, _) = matrix_posterior_row(&gram, &rhs, &prior, gamma, n)?;
        let reference = ridge_by_qr(&x, &y, &prior, gamma)
            .ok_or_else(|| HarnessError::Config("stacked least-squares system is singular".into()))?;
        worst = worst.max((&row - &reference).norm() / reference.norm().max(1e-300));
    }
    checks.push(Check::bound(
        Suite::Oracle,
        "matrix_row_risk_minimizer",
        worst,
        1e-8,
        format!("{rows} rows with J <= 6, relative distance to the QR least-squares minimizer"),
    ));

    let c = -3.0;
    let modes = 16;
    let l = galerkin_truth_matrix(TruthKind::NegLaplacian, c, modes, 4)?;
    let mut worst: f64 = 0.0;
    for r in 1..=modes {
        for k in 1..=modes {
            let kp = k as f64 * PI;
            let s2 = 2f64.sqrt();
            let applied = |z: f64| {
                let a = (c * z).exp();
                -(c * a * s2 * kp * (kp * z).cos() - a * s2 * kp * kp * (kp * z).sin())
            };
            let q = simpson(|z| cos_mode(r, z) * applied(z), 0.0, 1.0, 8192);
            worst = worst.max((l[(r - 1, k - 1)] - q).abs());
        }
    }
    checks.push(Check::bound(
        Suite::Oracle,
        "galerkin_forward_quadrature",
        worst,
        1e-8,
        format!("J = {modes}, worst absolute deviation from Simpson quadrature"),
    ));
    Ok(checks)
}

/// `R∞(est) - R_N(est)` straight from the raw samples, dropping the
/// estimator-free constants that cancel in the difference.
fn risk_difference(ds: &Dataset, est: &[f64], truth: &[f64], train: &[f64]) -> Option<f64> {
    let (g, y) = (ds.design()?.coeffs(), ds.outputs()?);
    let j = ds.modes();
    let expected: f64 = (0..j).map(|m| 0.5 * train[m] * est[m] * est[m] - train[m] * truth[m] * est[m]).sum();
    let mut empirical = 0.0;
    for s in 0..ds.n() {
        for m in 0..j {
            let pred = est[m] * g[(m, s)];
            empirical += 0.5 * pred * pred - y[(m, s)] * pred;
        }
    }
    Some(expected - empirical / ds.n() as f64)
}

fn gap_total(terms: GapTerms, fault: Fault) -> f64 {
    match fault {
        Fault::None => terms.total(),
        Fault::GapJ2Sign => terms.j1 - terms.j2 + terms.j3,
    }
}

fn identities_suite(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut rng = make_rng(opts.seed, 201);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.instances {
        let (truth, ds, spec, gamma) = random_diagonal_instance(&mut rng, 10, 20)?;
        let est: Vec<f64> = (0..ds.modes()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let terms = generalization_gap_emp(&ds, &est, &truth, &ErrorWeights::from(&spec), gamma)?;
        let direct = risk_difference(&ds, &est, &truth, spec.values())
            .ok_or_else(|| HarnessError::Config("raw samples missing".into()))?;
        let scale = direct.abs().max(terms.j1.abs()).max(terms.j2.abs()).max(terms.j3.abs()).max(1e-300);
        worst = worst.max((gap_total(terms, opts.fault) - direct).abs() / scale);
    }
    checks.push(Check::bound(
        Suite::Identities,
        "gen_gap_identity",
        worst,
        1e-10,
        format!("{} instances, relative deviation from the raw-sample risk difference", opts.instances),
    ));

    let mut rng = make_rng(opts.seed, 202);
    let mut worst_z: f64 = 0.0;
    let mut worst_draw_z: f64 = 0.0;
    for _ in 0..opts.risk_configs {
        let j = rng.random_range(1..=8);
        let n = rng.random_range(2..=20);
        let gamma = 10f64.powf(rng.random_range(-1.0..0.5));
        let spec = matern_spectrum(rng.random_range(1.0..10.0), rng.random_range(0.6..2.5), j)?;
        let test = ErrorWeights::from(&matern_spectrum(rng.random_range(1.0..10.0), rng.random_range(0.0..2.5), j)?);
        let prior = matern_spectrum(1.0, rng.random_range(-0.5..1.5), j)?;
        let truth: Vec<f64> = (0..j).map(|_| rng.random_range(-2.0..2.0)).collect();
        let design = draw_design(&spec, n, Law::Gaussian, &mut rng)?;
        let fixed = gen_diagonal_dataset(&truth, &design, gamma, &mut rng)?;
        let risk = conditional_risk_closed_form(&fixed, &prior, &truth, &test, gamma)?;
        let g = design.coeffs();
        let (mut s1, mut s2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..opts.noise_draws {
            let mut yg = vec![0.0; j];
            for m in 0..j {
                let mut acc = 0.0;
                for s in 0..n {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    acc += (g[(m, s)] * truth[m] + gamma * xi) * g[(m, s)];
                }
                yg[m] = acc / n as f64;
            }
            let ds = Dataset::from_statistics(n, gamma, fixed.suff_gg().to_vec(), yg)?;
            let post = diag_posterior(&ds, &prior, gamma)?;
            let err: f64 = (0..j).map(|m| test.values()[m] * (post.mean[m] - truth[m]).powi(2)).sum();
            s1 += err;
            s2 += err * err;
            let draw = &sample_posterior(&post, 1, &mut rng)?[0];
            let derr: f64 = (0..j).map(|m| test.values()[m] * (draw[m] - truth[m]).powi(2)).sum();
            d1 += derr;
            d2 += derr * derr;
        }
        let m = opts.noise_draws as f64;
        let z = |s1: f64, s2: f64, want: f64| {
            let mean = s1 / m;
            let se = ((s2 / m - mean * mean).max(0.0) / (m - 1.0)).sqrt();
            (mean - want).abs() / se.max(1e-300)
        };
        worst_z = worst_z.max(z(s1, s2, risk.mean_error()));
        worst_draw_z = worst_draw_z.max(z(d1, d2, risk.sample_error()));
    }
    checks.push(Check::bound(
        Suite::Identities,
        "closed_form_conditional_risk",
        worst_z,
        3.0,
        format!(
            "{} designs x {} noise draws, worst |MC - (I1+I2)| in standard errors",
            opts.risk_configs, opts.noise_draws
        ),
    ));
    checks.push(Check::bound(
        Suite::Identities,
        "closed_form_draw_risk",
        worst_draw_z,
        3.0,
        format!(
            "{} designs x {} posterior draws, worst |MC - (I1+I2+I3)| in standard errors",
            opts.risk_configs, opts.noise_draws
        ),
    ));
    Ok(checks)
}

/// Theory columns as printed in the published tables, row-major by truth
/// (forward, identity, inverse) then test smoothness then prior.
const TABLE_1: [f64; 9] = [0.714, 0.800, 0.615, 0.867, 0.889, 0.762, 0.913, 0.923, 0.828];
const TABLE_2: [f64; 18] = [
    0.429, 0.600, 0.462, 1.000, 1.000, 0.846, 0.733, 0.778, 0.667, 1.000, 1.000, 0.905, 0.826, 0.846, 0.759, 1.000,
    1.000, 0.931,
];

fn lemmas_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (which, name, published) in [(1u8, "theory_table_1", &TABLE_1[..]), (2, "theory_table_2", &TABLE_2[..])] {
        let rows = theory_table(which)?;
        let worst = rows
            .iter()
            .zip(published)
            .map(|(r, p)| r.prediction.map_or(f64::INFINITY, |q| (q.exponent - p).abs()))
            .fold(0.0, f64::max);
        checks.push(Check::bound(
            Suite::Lemmas,
            name,
            worst,
            5e-4,
            format!("{} exponents against the published three-decimal values", rows.len()),
        ));
    }

    // larger u·v - t has true constants near 2^-v/(uv - t + 1), outside [1/10, 10]
    let mut worst: f64 = 1.0;
    for t in [1.5, 2.0, 3.0, 5.0] {
        for u in [1.0, 2.0, 3.0] {
            for v in [0.0, 0.5, 1.0] {
                for e in (8..=24).step_by(4) {
                    let n = 1u64 << e;
                    let ratio = head_sum(t, u, v, n) / head_sum_order(t, u, v, n)?.value;
                    worst = worst.max(ratio).max(1.0 / ratio);
                }
            }
        }
    }
    checks.push(Check::bound(
        Suite::Lemmas,
        "head_sum_order",
        worst,
        10.0,
        "largest max(C, 1/C) of sum / predicted order over the (t, u, v, N) grid".into(),
    ));

    let xi: Vec<f64> = (1..=1 << 14)
        .map(|j| TruthKind::InvNegLaplacian.eigenvalue(j).unwrap_or(0.0))
        .collect();
    let mut worst: f64 = 0.0;
    for q in [0.0, 0.5, 1.0, 1.4] {
        for t in [0.0, 1.0, 4.5] {
            for u in [1.0, 2.5, 5.0] {
                for e in (8..=24).step_by(2) {
                    let (lhs, rhs) = tail_envelope(&xi, t, q, u, 1 << e)?;
                    worst = worst.max(lhs / rhs);
                }
            }
        }
    }
    checks.push(Check::bound(
        Suite::Lemmas,
        "tail_envelope",
        worst,
        1.0 + 1e-12,
        "largest tail / envelope ratio".into(),
    ));
    Ok(checks)
}

fn parseval_suite() -> Vec<Check> {
    let rows = 10_000;
    let cols = 32;
    let m: Vec<Vec<f64>> = (1..=cols).map(|k| (1..=rows).map(|j| basis_overlap(j, k)).collect()).collect();
    let (mut norm, mut ortho): (f64, f64) = (0.0, 0.0);
    for a in 0..cols {
        for b in a..cols {
            let dot: f64 = m[a].iter().zip(&m[b]).map(|(x, y)| x * y).sum();
            if a == b {
                norm = norm.max((dot - 1.0).abs());
            } else {
                ortho = ortho.max(dot.abs());
            }
        }
    }
    let mut sign: f64 = 0.0;
    for j in 1..=12 {
        for k in 1..=12 {
            let q = simpson(|z| cos_mode(j, z) * sin_mode(k, z), 0.0, 1.0, 4096);
            sign = sign.max((basis_overlap(j, k) - q).abs());
        }
    }
    vec![
        Check::bound(
            Suite::Parseval,
            "overlap_unit_columns",
            norm,
            1e-4,
            format!("|Σ_(j<={rows}) M_jk² - 1| for k <= {cols}"),
        ),
        Check::bound(
            Suite::Parseval,
            "overlap_orthogonal_columns",
            ortho,
            1e-4,
            format!("|Σ_(j<={rows}) M_jk M_jk'| for k != k' <= {cols}"),
        ),
        Check::bound(
            Suite::Parseval,
            "overlap_quadrature",
            sign,
            1e-10,
            "entries against Simpson quadrature, j, k <= 12".into(),
        ),
    ]
}
