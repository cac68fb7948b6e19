//! Deterministic scalar sequences: covariance spectra, prior variances,
//! truth eigenvalues, the cosine/sine basis overlap and Sobolev norms.
//!
//! Modes are 1-based in every public formula (`j = 1..=J`); storage is
//! 0-based.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::theory::Smoothness;

/// Values below this are reported by [`SpectralSequence::underflow_modes`].
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Number of series terms used for cross-basis variances unless told otherwise.
pub const CROSS_BASIS_DEFAULT_TERMS: usize = 1 << 21;

/// A strictly positive, finite sequence truncated at `len()` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSequence {
    values: Vec<f64>,
    decay_exponent_hint: Option<f64>,
}

impl SpectralSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("a spectral sequence needs at least one mode"));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(format!(
                "mode {} must be strictly positive and finite, got {}",
                i + 1,
                values[i]
            )));
        }
        Ok(Self {
            values,
            decay_exponent_hint: None,
        })
    }

    /// Builds a sequence from a function of the 1-based mode index.
    pub fn from_fn(modes: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((1..=modes).map(f).collect())
    }

    /// Records the nominal power `e` such that `values[j] = Θ(j^(-e))`.
    pub fn with_decay_hint(mut self, exponent: f64) -> Self {
        self.decay_exponent_hint = Some(exponent);
        self
    }

    pub fn decay_exponent_hint(&self) -> Option<f64> {
        self.decay_exponent_hint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the 1-based mode `j`.
    pub fn mode(&self, j: usize) -> f64 {
        self.values[j - 1]
    }

    /// Keeps the first `modes` entries.
    pub fn truncated(&self, modes: usize) -> Result<Self> {
        if modes == 0 || modes > self.len() {
            return Err(invalid(format!(
                "cannot truncate {} modes to {}",
                self.len(),
                modes
            )));
        }
        Ok(Self {
            values: self.values[..modes].to_vec(),
            decay_exponent_hint: self.decay_exponent_hint,
        })
    }

    /// 1-based modes whose value is below [`UNDERFLOW_FLOOR`].
    pub fn underflow_modes(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < UNDERFLOW_FLOOR)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// `τ^(2e-1) ((jπ)² + τ²)^(-e)` for a single 1-based mode.
pub fn matern_value(tau: f64, exponent: f64, j: usize) -> f64 {
    let jp = j as f64 * PI;
    libm::exp((2.0 * exponent - 1.0) * libm::log(tau) - exponent * libm::log(jp * jp + tau * tau))
}

/// Matérn-like spectrum `τ^(2e-1) ((jπ)² + τ²)^(-e)`, `j = 1..=modes`.
pub fn matern_spectrum(tau: f64, exponent: f64, modes: usize) -> Result<SpectralSequence> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(invalid(format!("inverse length scale must be positive, got {tau}")));
    }
    if modes == 0 {
        return Err(invalid("truncation level must be at least one mode"));
    }
    if !exponent.is_finite() {
        return Err(invalid("spectrum exponent must be finite"));
    }
    Ok(SpectralSequence::from_fn(modes, |j| matern_value(tau, exponent, j))?
        .with_decay_hint(2.0 * exponent))
}

/// Diagonal prior variances `σ_j² = τ₃^(2p-1) ((jπ)² + τ₃²)^(-p)`.
pub fn prior_variances_diagonal(p: f64, tau3: f64, modes: usize) -> Result<SpectralSequence> {
    matern_spectrum(tau3, p, modes)
}

/// The three canonical truths plus caller-supplied eigenvalues.
///
/// For the matrix (non-diagonal) model `NegLaplacian` stands for the
/// divergence-form operator `-(a u')'` and `InvNegLaplacian` for its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthKind {
    NegLaplacian,
    Identity,
    InvNegLaplacian,
    Custom,
}

impl TruthKind {
    pub const CANONICAL: [TruthKind; 3] = [
        TruthKind::NegLaplacian,
        TruthKind::Identity,
        TruthKind::InvNegLaplacian,
    ];

    /// Supremum Sobolev exponent of the eigenvalue sequence.
    pub fn s_star(self) -> Option<f64> {
        match self {
            TruthKind::NegLaplacian => Some(-2.5),
            TruthKind::Identity => Some(-0.5),
            TruthKind::InvNegLaplacian => Some(1.5),
            TruthKind::Custom => None,
        }
    }

    pub fn eigenvalue(self, j: usize) -> Option<f64> {
        let jp = j as f64 * PI;
        match self {
            TruthKind::NegLaplacian => Some(jp * jp),
            TruthKind::Identity => Some(1.0),
            TruthKind::InvNegLaplacian => Some(1.0 / (jp * jp)),
            TruthKind::Custom => None,
        }
    }

    /// Default noise scale used for this truth in the rate experiments.
    pub fn default_noise_scale(self) -> Option<f64> {
        match self {
            TruthKind::NegLaplacian => Some(1e-1),
            TruthKind::Identity => Some(1e-3),
            TruthKind::InvNegLaplacian => Some(1e-5),
            TruthKind::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TruthKind::NegLaplacian => "neg_laplacian",
            TruthKind::Identity => "identity",
            TruthKind::InvNegLaplacian => "inv_neg_laplacian",
            TruthKind::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "neg_laplacian" | "A" | "a" => Some(TruthKind::NegLaplacian),
            "identity" | "id" => Some(TruthKind::Identity),
            "inv_neg_laplacian" | "A_inv" | "a_inv" => Some(TruthKind::InvNegLaplacian),
            "custom" => Some(TruthKind::Custom),
            _ => None,
        }
    }
}

/// Diagonal truth: eigenvalues `ℓ†_j` and the Sobolev supremum `s*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthOperator {
    kind: TruthKind,
    eigenvalues: Vec<f64>,
    s_star: f64,
}

impl TruthOperator {
    pub fn custom(eigenvalues: Vec<f64>, s_star: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(invalid("truth needs at least one mode"));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) || !s_star.is_finite() {
            return Err(invalid("truth eigenvalues and s* must be finite"));
        }
        Ok(Self {
            kind: TruthKind::Custom,
            eigenvalues,
            s_star,
        })
    }

    pub fn kind(&self) -> TruthKind {
        self.kind
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn s_star(&self) -> f64 {
        self.s_star
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Eigenvalues of one of the canonical truths, `j = 1..=modes`.
pub fn truth_eigenvalues(kind: TruthKind, modes: usize) -> Result<TruthOperator> {
    if modes == 0 {
        return Err(invalid("truncation level must be at least one mode"));
    }
    let s_star = kind
        .s_star()
        .ok_or_else(|| invalid("custom truths are built with TruthOperator::custom"))?;
    let eigenvalues = (1..=modes)
        .map(|j| kind.eigenvalue(j).unwrap_or_default())
        .collect();
    Ok(TruthOperator {
        kind,
        eigenvalues,
        s_star,
    })
}

/// Prior variance `σ_jk²` of entry `(j, k)` for the matrix model.
pub fn prior_variances_matrix(kind: TruthKind, z: f64, j: usize, k: usize) -> Result<f64> {
    if j == 0 || k == 0 {
        return Err(invalid("matrix indices are 1-based"));
    }
    let (jf, kf) = (j as f64, k as f64);
    let jk = jf * kf;
    let d = jf - kf;
    let gap = 1.0 + d * d;
    let v = match kind {
        TruthKind::NegLaplacian => {
            let r = (1.0 + (kf / jf) * (kf / jf)) / gap;
            libm::pow(jk, -(z - 2.0)) * r * r
        }
        TruthKind::Identity => {
            let r = (kf + kf / jf) / (1.0 + jf + d * d);
            libm::pow(jk, -z) * r * r
        }
        TruthKind::InvNegLaplacian => {
            let r = (1.0 + jf / kf) / gap;
            libm::pow(jk, -(z + 2.0)) * r * r
        }
        TruthKind::Custom => {
            return Err(invalid("matrix prior variances exist only for the canonical truths"))
        }
    };
    Ok(v)
}

/// `⟨φ_j, ϕ_k⟩` for the output cosines `φ_j(z) = √2 cos((j-½)πz)` and input
/// sines `ϕ_k(z) = √2 sin(kπz)` on `(0, 1)`.
///
/// Closed form `8k / (π (4k² - (2j-1)²))`.
pub fn basis_overlap(j: usize, k: usize) -> f64 {
    let two_j = 2 * j as i64 - 1;
    let k = k as i64;
    let denom = 4 * k * k - two_j * two_j;
    8.0 * k as f64 / (PI * denom as f64)
}

/// Overlap matrix with rows indexed by output modes, columns by input modes.
pub fn basis_overlap_matrix(out_modes: usize, in_modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(out_modes, in_modes, |r, c| basis_overlap(r + 1, c + 1))
}

/// Partial sum of a cross-basis variance series plus its last term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossBasisSum {
    pub value: f64,
    pub terms: usize,
    /// Magnitude of the final summand, a crude convergence diagnostic.
    pub last_term: f64,
}

/// `ϑ_j² = Σ_{k≤K} 64 π⁻² λ_k² k² (4(j(j-1) - k²) + 1)⁻²`, the variance of the
/// `j`-th output-basis coefficient of a field whose KL spectrum `λ_k²` lives in
/// the input sine basis.
pub fn cross_basis_variance(lambda_sq: &[f64], j: usize, terms: usize) -> Result<CrossBasisSum> {
    if j == 0 {
        return Err(invalid("modes are 1-based"));
    }
    if terms == 0 || terms > lambda_sq.len() {
        return Err(invalid(format!(
            "need 1 <= K <= {} summation terms, got {}",
            lambda_sq.len(),
            terms
        )));
    }
    let c = 64.0 / (PI * PI);
    let jj = j as i64;
    let mut value = 0.0;
    let mut last_term = 0.0;
    for (idx, &lam) in lambda_sq[..terms].iter().enumerate() {
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(invalid(format!("λ² at mode {} must be nonnegative", idx + 1)));
        }
        let k = idx as i64 + 1;
        let d = (4 * (jj * (jj - 1) - k * k) + 1) as f64;
        let kf = k as f64;
        last_term = c * lam * kf * kf / (d * d);
        value += last_term;
    }
    Ok(CrossBasisSum {
        value,
        terms,
        last_term,
    })
}

/// Weighted ℓ² norm `(Σ j^(2s) v_j²)^(1/2)` of a truncated sequence.
pub fn sobolev_norm(v: &[f64], s: f64) -> f64 {
    let sum: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| libm::pow((i + 1) as f64, 2.0 * s) * x * x)
        .sum();
    libm::sqrt(sum)
}

/// Smoothness, scale and noise parameters of a diagonal experiment.
///
/// Construction enforces `α > 1/2`, `α' ≥ 0` and the smoothness-range
/// condition `min(α-β, α') + s > 0`, `min(α-β, α') + p - 1/2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    alpha: f64,
    alpha_prime: f64,
    p: f64,
    s: f64,
    tau1: f64,
    tau2: f64,
    tau3: f64,
    gamma: f64,
    beta: f64,
}

impl ModelConfig {
    /// `τ₁ = τ₂ = 15`, `τ₃ = 1`, `γ = 1`, white noise.
    pub fn new(alpha: f64, alpha_prime: f64, p: f64, s: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            alpha_prime,
            p,
            s,
            tau1: 15.0,
            tau2: 15.0,
            tau3: 1.0,
            gamma: 1.0,
            beta: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration for a canonical truth with `s = s*` and `p = s* + 1/2 + z`,
    /// using that truth's default noise scale.
    pub fn for_truth(kind: TruthKind, alpha: f64, alpha_prime: f64, z: f64) -> Result<Self> {
        let s = kind
            .s_star()
            .ok_or_else(|| invalid("custom truths need explicit p and s"))?;
        Self::new(alpha, alpha_prime, s + 0.5 + z, s)?
            .with_gamma(kind.default_noise_scale().unwrap_or(1.0))
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise_smoothness(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_length_scales(mut self, tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        self.tau1 = tau1;
        self.tau2 = tau2;
        self.tau3 = tau3;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.alpha_prime,
            self.p,
            self.s,
            self.tau1,
            self.tau2,
            self.tau3,
            self.gamma,
            self.beta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("model parameters must be finite"));
        }
        if self.alpha <= 0.5 {
            return Err(invalid(format!("α must exceed 1/2, got {}", self.alpha)));
        }
        if self.alpha_prime < 0.0 {
            return Err(invalid(format!("α' must be nonnegative, got {}", self.alpha_prime)));
        }
        if self.tau1 <= 0.0 || self.tau2 <= 0.0 || self.tau3 <= 0.0 {
            return Err(invalid("inverse length scales must be positive"));
        }
        if self.gamma < 0.0 || self.beta < 0.0 {
            return Err(invalid("noise scale and noise smoothness must be nonnegative"));
        }
        self.smoothness().check_range()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn tau1(&self) -> f64 {
        self.tau1
    }
    pub fn tau2(&self) -> f64 {
        self.tau2
    }
    pub fn tau3(&self) -> f64 {
        self.tau3
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Prior shift `z = p - s - 1/2`.
    pub fn z(&self) -> f64 {
        self.p - self.s - 0.5
    }

    pub fn smoothness(&self) -> Smoothness {
        Smoothness {
            alpha: self.alpha,
            alpha_prime: self.alpha_prime,
            p: self.p,
            s: self.s,
            beta: self.beta,
        }
    }

    /// Training spectrum `ϑ_j²`.
    pub fn train_spectrum(&self, modes: usize) -> Result<SpectralSequence> {
        matern_spectrum(self.tau1, self.alpha, modes)
    }

    /// Test spectrum `ϑ'_j²`.
    pub fn test_spectrum(&self, modes: usize) -> Result<SpectralSequence> {
        matern_spectrum(self.tau2, self.alpha_prime, modes)
    }

    /// Prior variances `σ_j²`.
    pub fn prior(&self, modes: usize) -> Result<SpectralSequence> {
        prior_variances_diagonal(self.p, self.tau3, modes)
    }

    /// Colored-noise eigenvalues `λ_j(Γ) = j^(-2β)`, or `None` for white noise.
    pub fn noise_spectrum(&self, modes: usize) -> Result<Option<SpectralSequence>> {
        if self.beta == 0.0 {
            return Ok(None);
        }
        let beta = self.beta;
        SpectralSequence::from_fn(modes, |j| libm::pow(j as f64, -2.0 * beta))
            .map(|s| Some(s.with_decay_hint(2.0 * beta)))
    }
}
