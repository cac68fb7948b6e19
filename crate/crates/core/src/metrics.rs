//! Error functionals: weighted and relative test errors, excess risk, the
//! empirical generalization gap and the closed-form conditional risk.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_dims, invalid, Error, Result};
use crate::sampling::Dataset;
use crate::spectra::SpectralSequence;

/// Nonnegative per-mode weights `ϑ'_j²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorWeights {
    values: Vec<f64>,
}

impl ErrorWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(format!(
                "weight at mode {} must be finite and nonnegative",
                i + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<&SpectralSequence> for ErrorWeights {
    fn from(s: &SpectralSequence) -> Self {
        Self {
            values: s.values().to_vec(),
        }
    }
}

/// `Σ_j w_j (ℓ†_j - est_j)²`.
pub fn weighted_sq_error(est: &[f64], truth: &[f64], w: &ErrorWeights) -> Result<f64> {
    check_dims(truth.len(), est.len())?;
    check_dims(truth.len(), w.len())?;
    Ok(est
        .iter()
        .zip(truth)
        .zip(w.values())
        .map(|((e, t), w)| w * (t - e) * (t - e))
        .sum())
}

/// `Σ_j w_j (ℓ†_j)²`.
pub fn weighted_energy(truth: &[f64], w: &ErrorWeights) -> Result<f64> {
    check_dims(truth.len(), w.len())?;
    Ok(truth.iter().zip(w.values()).map(|(t, w)| w * t * t).sum())
}

/// Weighted error normalized by the weighted truth energy.
pub fn relative_error_diag(est: &[f64], truth: &[f64], w: &ErrorWeights) -> Result<f64> {
    let denom = weighted_energy(truth, w)?;
    if !(denom > 0.0) {
        return Err(invalid("relative error needs a nonzero weighted truth"));
    }
    Ok(weighted_sq_error(est, truth, w)? / denom)
}

/// `Σ_jk λ'_k (L† - L̄)²_jk / Σ_jk λ'_k (L†_jk)²` with `λ'_k²` indexed by column.
pub fn relative_error_matrix(est: &DMatrix<f64>, truth: &DMatrix<f64>, input_spectrum: &[f64]) -> Result<f64> {
    check_dims(truth.nrows(), est.nrows())?;
    check_dims(truth.ncols(), est.ncols())?;
    check_dims(truth.ncols(), input_spectrum.len())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, lam) in input_spectrum.iter().enumerate() {
        for j in 0..truth.nrows() {
            let t = truth[(j, k)];
            let d = t - est[(j, k)];
            num += lam * d * d;
            den += lam * t * t;
        }
    }
    if !(den > 0.0) {
        return Err(invalid("relative error needs a nonzero weighted truth"));
    }
    Ok(num / den)
}

/// In-distribution excess risk: the weighted error with weights `ϑ_j²`.
pub fn excess_risk(est: &[f64], truth: &[f64], train_w: &ErrorWeights) -> Result<f64> {
    weighted_sq_error(est, truth, train_w)
}

/// The three series of the design-conditional risk of the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalRisk {
    /// Squared shrinkage bias `Σ w ℓ†² / (1+D)²`.
    pub i1: f64,
    /// Noise-induced variance of the mean `Σ w Nγ⁻²σ⁴⟨gg⟩ / (1+D)²`.
    pub i2: f64,
    /// Posterior spread `Σ w σ² / (1+D)`.
    pub i3: f64,
}

impl ConditionalRisk {
    /// Noise-averaged test error of the posterior mean.
    pub fn mean_error(&self) -> f64 {
        self.i1 + self.i2
    }

    /// Noise- and posterior-averaged test error of a posterior draw.
    pub fn sample_error(&self) -> f64 {
        self.i1 + self.i2 + self.i3
    }
}

fn conditional_risk(
    suff_gg: &[f64],
    prior: &[f64],
    truth: &[f64],
    w: &ErrorWeights,
    noise_var: impl Fn(usize) -> f64,
    n: usize,
) -> Result<ConditionalRisk> {
    let j = suff_gg.len();
    for len in [prior.len(), truth.len(), w.len()] {
        if len < j {
            return Err(Error::DimensionMismatch { expected: j, found: len });
        }
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let nf = n as f64;
    let (mut i1, mut i2, mut i3) = (0.0, 0.0, 0.0);
    for m in 0..j {
        let v = noise_var(m);
        if !(v > 0.0) {
            return Err(invalid(format!("noise variance at mode {} must be positive", m + 1)));
        }
        let (s2, wt, l) = (prior[m], w.values()[m], truth[m]);
        let d = 1.0 + nf * s2 * suff_gg[m] / v;
        i1 += wt * l * l / (d * d);
        i2 += wt * nf * s2 * s2 * suff_gg[m] / (v * d * d);
        i3 += wt * s2 / d;
    }
    Ok(ConditionalRisk { i1, i2, i3 })
}

/// Closed-form test error given the design, averaged over noise (and, in
/// `i3`, over posterior draws).
pub fn conditional_risk_closed_form(
    ds: &Dataset,
    prior: &SpectralSequence,
    truth: &[f64],
    w: &ErrorWeights,
    gamma: f64,
) -> Result<ConditionalRisk> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("noise scale must be positive, got {gamma}")));
    }
    let g2 = gamma * gamma;
    conditional_risk(ds.suff_gg(), prior.values(), truth, w, |_| g2, ds.n())
}

/// As [`conditional_risk_closed_form`] with noise variance `γ² λ_j(Γ)`.
pub fn conditional_risk_closed_form_colored(
    ds: &Dataset,
    prior: &SpectralSequence,
    truth: &[f64],
    w: &ErrorWeights,
    gamma: f64,
    gamma_spectrum: &SpectralSequence,
) -> Result<ConditionalRisk> {
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
    conditional_risk(ds.suff_gg(), prior.values(), truth, w, |j| g2 * lam[j], ds.n())
}

/// The three parts of the empirical generalization gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerms {
    /// `½ Σ (ϑ² - ⟨gg⟩)(est - ℓ†)²`.
    pub j1: f64,
    /// `½ Σ (⟨gg⟩ - ϑ²) ℓ†²`.
    pub j2: f64,
    /// `γ Σ ⟨gξ⟩ est`.
    pub j3: f64,
}

impl GapTerms {
    pub fn total(&self) -> f64 {
        self.j1 + self.j2 + self.j3
    }
}

/// Gap terms from explicit per-mode products `⟨g g⟩` and `⟨g ξ⟩`.
pub fn generalization_gap_from_products(
    suff_gg: &[f64],
    suff_gxi: &[f64],
    est: &[f64],
    truth: &[f64],
    train_w: &ErrorWeights,
    gamma: f64,
) -> Result<GapTerms> {
    let j = suff_gg.len();
    for len in [suff_gxi.len(), est.len(), truth.len(), train_w.len()] {
        check_dims(j, len)?;
    }
    let (mut j1, mut j2, mut j3) = (0.0, 0.0, 0.0);
    for m in 0..j {
        let th = train_w.values()[m];
        let d = est[m] - truth[m];
        j1 += 0.5 * (th - suff_gg[m]) * d * d;
        j2 += 0.5 * (suff_gg[m] - th) * truth[m] * truth[m];
        j3 += suff_gxi[m] * est[m];
    }
    Ok(GapTerms { j1, j2, j3: gamma * j3 })
}

/// Expected minus empirical risk of `est`, with the noise products
/// reconstructed as `⟨g ξ⟩ = (⟨y g⟩ - ℓ†⟨g g⟩)/γ`.
pub fn generalization_gap_emp(
    ds: &Dataset,
    est: &[f64],
    truth: &[f64],
    train_w: &ErrorWeights,
    gamma: f64,
) -> Result<GapTerms> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(
            "noise products cannot be reconstructed without a positive noise scale",
        ));
    }
    let j = ds.modes();
    check_dims(j, truth.len())?;
    let gxi: Vec<f64> = (0..j)
        .map(|m| (ds.suff_yg()[m] - truth[m] * ds.suff_gg()[m]) / gamma)
        .collect();
    generalization_gap_from_products(ds.suff_gg(), &gxi, est, truth, train_w, gamma)
}

/// `Σ_{j > from} w_j ℓ†_j²`, the truncation tail past mode `from`.
pub fn truncation_tail(w: &[f64], truth: &[f64], from: usize) -> Result<f64> {
    check_dims(w.len(), truth.len())?;
    Ok(w.iter().zip(truth).skip(from).map(|(w, t)| w * t * t).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Basis, DesignMatrix, Law};

    fn w(v: &[f64]) -> ErrorWeights {
        ErrorWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn weighted_examples() {
        assert_eq!(weighted_sq_error(&[1.0, 2.0], &[1.0, 2.0], &w(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(weighted_sq_error(&[0.0, 0.0], &[1.0, 0.0], &w(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(weighted_sq_error(&[0.0, 0.0], &[1.0, 2.0], &w(&[1.0, 0.25])).unwrap(), 2.0);
        assert!(weighted_sq_error(&[0.0], &[1.0, 2.0], &w(&[1.0, 0.25])).is_err());
        assert!(ErrorWeights::new(alloc::vec![-1.0]).is_err());
    }

    #[test]
    fn relative_examples() {
        assert_eq!(relative_error_diag(&[1.0, 1.0], &[1.0, 1.0], &w(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(relative_error_diag(&[0.0, 0.0], &[3.0, -1.0], &w(&[0.5, 2.0])).unwrap(), 1.0);
        assert_eq!(relative_error_diag(&[1.0, 0.0], &[1.0, 1.0], &w(&[1.0, 1.0])).unwrap(), 0.5);
        assert!(relative_error_diag(&[1.0], &[0.0], &w(&[1.0])).is_err());
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(relative_error_matrix(&t, &t, &[1.0, 0.5]).unwrap(), 0.0);
        assert_eq!(relative_error_matrix(&DMatrix::zeros(2, 2), &t, &[1.0, 0.5]).unwrap(), 1.0);
        let one = relative_error_matrix(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 2.0), &[3.0])
            .unwrap();
        assert_eq!(one, relative_error_diag(&[0.5], &[2.0], &w(&[3.0])).unwrap());
    }

    #[test]
    fn closed_form_hand_example() {
        let design =
            DesignMatrix::from_coeffs(DMatrix::from_element(1, 1, 1.0), Law::Gaussian, Basis::Output).unwrap();
        let ds = Dataset::from_raw(design, DMatrix::from_element(1, 1, 0.3), 1.0).unwrap();
        let prior = SpectralSequence::new(alloc::vec![1.0]).unwrap();
        let r = conditional_risk_closed_form(&ds, &prior, &[1.0], &w(&[1.0]), 1.0).unwrap();
        assert!((r.i1 - 0.25).abs() < 1e-15);
        assert!((r.i2 - 0.25).abs() < 1e-15);
        assert!((r.i3 - 0.5).abs() < 1e-15);
        assert!((r.sample_error() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_vanishing_prior() {
        let ds = Dataset::from_statistics(5, 1.0, alloc::vec![1.0, 2.0], alloc::vec![0.0, 0.0]).unwrap();
        let prior = SpectralSequence::new(alloc::vec![1e-200, 1e-200]).unwrap();
        let r = conditional_risk_closed_form(&ds, &prior, &[1.0, 3.0], &w(&[2.0, 1.0]), 1.0).unwrap();
        assert!(r.i2 < 1e-190 && r.i3 < 1e-190);
        assert!((r.i1 - 11.0).abs() < 1e-12);
    }

    #[test]
    fn gap_examples() {
        let ds = Dataset::from_statistics(2, 1.0, alloc::vec![0.5, 2.0], alloc::vec![0.0, 0.0]).unwrap();
        let g = generalization_gap_emp(&ds, &[0.0, 0.0], &[0.0, 0.0], &w(&[1.0, 1.0]), 1.0).unwrap();
        assert_eq!(g.total(), 0.0);
        let ds = Dataset::from_statistics(2, 0.5, alloc::vec![0.5, 2.0], alloc::vec![0.7, -1.0]).unwrap();
        let g = generalization_gap_emp(&ds, &[1.0, 2.0], &[1.0, 2.0], &w(&[1.0, 1.0]), 0.5).unwrap();
        assert_eq!(g.j1, 0.0);
        assert!(generalization_gap_emp(&ds, &[1.0, 2.0], &[1.0, 2.0], &w(&[1.0, 1.0]), 0.0).is_err());
        // single mode, g = (2, 0), no noise
        let ds = Dataset::from_statistics(2, 1.0, alloc::vec![2.0], alloc::vec![2.0]).unwrap();
        let g = generalization_gap_emp(&ds, &[2.0], &[1.0], &w(&[1.0]), 1.0).unwrap();
        assert!((g.j1 + 0.5).abs() < 1e-15);
        assert!((g.j2 - 0.5).abs() < 1e-15);
        assert!(g.j3.abs() < 1e-15);
    }

    #[test]
    fn tail_skips_leading_modes() {
        assert_eq!(truncation_tail(&[1.0, 1.0, 2.0], &[5.0, 1.0, 1.0], 1).unwrap(), 3.0);
        assert_eq!(truncation_tail(&[1.0, 1.0], &[5.0, 1.0], 2).unwrap(), 0.0);
    }
}
