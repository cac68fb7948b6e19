//! Conjugate Gaussian posteriors: the per-mode diagonal update, its colored
//! noise variant, posterior sampling, the row-wise ridge estimator of the
//! matrix model, and Galerkin truth matrices for the divergence-form operator.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dims, invalid, Error, Result};
use crate::sampling::Dataset;
use crate::spectra::{basis_overlap_matrix, prior_variances_matrix, SpectralSequence, TruthKind};

/// Product-Gaussian posterior: mode `j` is `N(mean[j], variance[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DiagonalPosterior {
    pub fn modes(&self) -> usize {
        self.mean.len()
    }
}

/// Posterior from sufficient statistics with per-mode noise variances.
pub fn posterior_from_statistics(
    suff_gg: &[f64],
    suff_yg: &[f64],
    prior: &[f64],
    noise_var: impl Fn(usize) -> f64,
    n: usize,
) -> Result<DiagonalPosterior> {
    check_dims(suff_gg.len(), suff_yg.len())?;
    if prior.len() < suff_gg.len() {
        return Err(Error::DimensionMismatch {
            expected: suff_gg.len(),
            found: prior.len(),
        });
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let nf = n as f64;
    let mut mean = Vec::with_capacity(suff_gg.len());
    let mut variance = Vec::with_capacity(suff_gg.len());
    for j in 0..suff_gg.len() {
        let v = noise_var(j);
        if !(v > 0.0) {
            return Err(invalid(format!("noise variance at mode {} must be positive", j + 1)));
        }
        let sig2 = prior[j];
        let w = nf * sig2 / v;
        let denom = 1.0 + w * suff_gg[j];
        mean.push(w * suff_yg[j] / denom);
        variance.push(sig2 / denom);
    }
    Ok(DiagonalPosterior { mean, variance })
}

/// `ℓ̄_j = Nγ⁻²σ_j²⟨y_j g_j⟩ / (1 + Nγ⁻²σ_j²⟨g_j g_j⟩)`,
/// `(σ_j^(N))² = σ_j² / (1 + Nγ⁻²σ_j²⟨g_j g_j⟩)`.
pub fn diag_posterior(ds: &Dataset, prior: &SpectralSequence, gamma: f64) -> Result<DiagonalPosterior> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("noise scale must be positive, got {gamma}")));
    }
    let g2 = gamma * gamma;
    posterior_from_statistics(ds.suff_gg(), ds.suff_yg(), prior.values(), |_| g2, ds.n())
}

/// Diagonal posterior with `γ²` replaced by `γ² λ_j(Γ)`.
pub fn diag_posterior_colored(
    ds: &Dataset,
    prior: &SpectralSequence,
    gamma: f64,
    gamma_spectrum: &SpectralSequence,
) -> Result<DiagonalPosterior> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("noise scale must be positive, got {gamma}")));
    }
    if gamma_spectrum.len() < ds.modes() {
        return Err(Error::DimensionMismatch {
            expected: ds.modes(),
            found: gamma_spectrum.len(),
        });
    }
    let g2 = gamma * gamma;
    let lam = gamma_spectrum.values();
    posterior_from_statistics(ds.suff_gg(), ds.suff_yg(), prior.values(), |j| g2 * lam[j], ds.n())
}

/// `m` independent draws; each is a full sequence over all modes.
pub fn sample_posterior<R: Rng + ?Sized>(
    post: &DiagonalPosterior,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(invalid("need at least one posterior draw"));
    }
    let sd: Vec<f64> = post.variance.iter().map(|v| libm::sqrt(*v)).collect();
    Ok((0..m)
        .map(|_| {
            post.mean
                .iter()
                .zip(&sd)
                .map(|(mu, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    mu + s * z
                })
                .collect()
        })
        .collect())
}

/// Solver diagnostics for one row of the matrix model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDiagnostics {
    /// Squared ratio of the extreme Cholesky pivots of the equilibrated system.
    pub condition_estimate: f64,
    /// `‖K x - b‖∞ / (‖K‖∞ ‖x‖∞ + ‖b‖∞)`.
    pub backward_error: f64,
}

/// Maximum tolerated normwise backward error of a row solve.
pub const ROW_RESIDUAL_TOL: f64 = 1e-10;

/// Solves `(A + (γ²/N) Σ_j⁻¹) row = b_j` with `Σ_j = diag(row_prior)`.
///
/// The system is symmetrically scaled to unit diagonal before the Cholesky
/// factorization; the gram of a smooth design is far too ill-conditioned to
/// factor unscaled.
pub fn matrix_posterior_row(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    row_prior: &[f64],
    gamma: f64,
    n: usize,
) -> Result<(DVector<f64>, RowDiagnostics)> {
    let j = gram.nrows();
    check_dims(j, gram.ncols())?;
    check_dims(j, rhs.len())?;
    check_dims(j, row_prior.len())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("noise scale must be positive, got {gamma}")));
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    if row_prior.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("row prior variances must be positive and finite"));
    }
    let ridge = gamma * gamma / n as f64;
    let mut k = gram.clone();
    for (i, s) in row_prior.iter().enumerate() {
        k[(i, i)] += ridge / s;
    }
    let scale: Vec<f64> = (0..j).map(|i| 1.0 / libm::sqrt(k[(i, i)])).collect();
    let mut ks = k.clone();
    for c in 0..j {
        for r in 0..j {
            ks[(r, c)] *= scale[r] * scale[c];
        }
    }
    let bs = DVector::from_fn(j, |i, _| rhs[i] * scale[i]);
    let chol = ks.cholesky().ok_or_else(|| Error::Numerical {
        reason: "Cholesky factorization of the regularized gram failed".into(),
        condition: f64::INFINITY,
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let condition_estimate = (hi / lo) * (hi / lo);
    let w = chol.solve(&bs);
    let x = DVector::from_fn(j, |i, _| w[i] * scale[i]);
    let resid = &k * &x - rhs;
    let inf = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let vmax = |v: &DVector<f64>| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let denom = inf(&k) * vmax(&x) + vmax(rhs);
    let backward_error = if denom > 0.0 { vmax(&resid) / denom } else { 0.0 };
    if !(backward_error <= ROW_RESIDUAL_TOL) {
        return Err(Error::Numerical {
            reason: format!("row residual {backward_error:e} exceeds tolerance"),
            condition: condition_estimate,
        });
    }
    Ok((
        x,
        RowDiagnostics {
            condition_estimate,
            backward_error,
        },
    ))
}

/// Estimated operator matrix of the matrix model.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFit {
    pub rows: DMatrix<f64>,
    pub diagnostics: Vec<RowDiagnostics>,
}

/// Solves every row with the matrix prior of `kind` at shift `z`.
pub fn matrix_posterior(ds: &Dataset, kind: TruthKind, z: f64, gamma: f64) -> Result<MatrixFit> {
    let gram = ds
        .gram()
        .ok_or_else(|| invalid("dataset carries no gram; build it with gen_matrix_dataset"))?;
    let rhs = ds.rhs().ok_or_else(|| invalid("dataset carries no right-hand sides"))?;
    let (jo, ji) = (rhs.nrows(), gram.nrows());
    let mut rows = DMatrix::zeros(jo, ji);
    let mut diagnostics = Vec::with_capacity(jo);
    for j in 0..jo {
        let prior: Vec<f64> = (0..ji)
            .map(|k| prior_variances_matrix(kind, z, j + 1, k + 1))
            .collect::<Result<_>>()?;
        let b = rhs.row(j).transpose();
        let (x, d) = matrix_posterior_row(gram, &b, &prior, gamma, ds.n()).map_err(|e| match e {
            Error::Numerical { reason, condition } => Error::Numerical {
                reason: format!("row {}: {reason}", j + 1),
                condition,
            },
            other => other,
        })?;
        rows.set_row(j, &x.transpose());
        diagnostics.push(d);
    }
    Ok(MatrixFit { rows, diagnostics })
}

/// `(∫₀¹ e^{cz} cos ωz dz, ∫₀¹ e^{cz} sin ωz dz)` from the complex primitive.
pub fn exp_trig_integrals(c: f64, omega: f64) -> (f64, f64) {
    let d = c * c + omega * omega;
    if d == 0.0 {
        return (1.0, 0.0);
    }
    let ec = libm::exp(c);
    let (s, co) = (libm::sin(omega), libm::cos(omega));
    let re = ec * co - 1.0;
    let im = ec * s;
    ((re * c + im * omega) / d, (im * c - re * omega) / d)
}

/// `⟨φ_j, A_a ϕ_k⟩` for `A_a u = -(a u')'`, `a(z) = e^{cz}`, cosine outputs and
/// sine inputs.
pub fn divergence_form_entry(c: f64, j: usize, k: usize) -> f64 {
    let a = (j as f64 - 0.5) * PI;
    let kp = k as f64 * PI;
    let (c_sum, s_sum) = exp_trig_integrals(c, a + kp);
    let (c_dif, s_dif) = exp_trig_integrals(c, kp - a);
    2.0 * kp * (0.5 * kp * (s_sum + s_dif) - 0.5 * c * (c_dif + c_sum))
}

/// Sine-basis stiffness `S_{k'k} = ⟨ϕ_k', A_a ϕ_k⟩`.
pub fn sine_stiffness(c: f64, modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(modes, modes, |r, q| {
        let (kr, kq) = ((r + 1) as f64, (q + 1) as f64);
        let (c_dif, _) = exp_trig_integrals(c, (kr - kq) * PI);
        let (c_sum, _) = exp_trig_integrals(c, (kr + kq) * PI);
        kr * kq * PI * PI * (c_dif + c_sum)
    })
}

/// Default ratio between the inversion space and the output truncation.
pub const GALERKIN_OVERSAMPLING: usize = 4;

/// Truth matrix `L†_jk = ⟨φ_j, L† ϕ_k⟩`, `j, k ≤ modes`, for the forward
/// operator, the identity, or the inverse operator.
///
/// The inverse is obtained by inverting the sine stiffness on
/// `oversampling · modes` modes and mapping through the overlap matrix.
pub fn galerkin_truth_matrix(
    kind: TruthKind,
    a_rate: f64,
    modes: usize,
    oversampling: usize,
) -> Result<DMatrix<f64>> {
    if modes == 0 {
        return Err(invalid("truncation level must be at least one mode"));
    }
    if !a_rate.is_finite() {
        return Err(invalid("coefficient rate must be finite"));
    }
    match kind {
        TruthKind::NegLaplacian => Ok(DMatrix::from_fn(modes, modes, |r, q| {
            divergence_form_entry(a_rate, r + 1, q + 1)
        })),
        TruthKind::Identity => Ok(basis_overlap_matrix(modes, modes)),
        TruthKind::InvNegLaplacian => {
            if oversampling == 0 {
                return Err(invalid("oversampling must be at least 1"));
            }
            let big = modes * oversampling;
            let chol = sine_stiffness(a_rate, big).cholesky().ok_or_else(|| Error::Numerical {
                reason: "stiffness matrix is not positive definite".into(),
                condition: f64::INFINITY,
            })?;
            let rhs = DMatrix::from_fn(big, modes, |r, q| if r == q { 1.0 } else { 0.0 });
            let inv_cols = chol.solve(&rhs);
            Ok(basis_overlap_matrix(modes, big) * inv_cols)
        }
        TruthKind::Custom => Err(invalid("Galerkin matrices exist only for the canonical truths")),
    }
}
