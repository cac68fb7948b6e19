//! Closed-form rate objects: the truncation index `J_N`, the sequence `ρ_N`,
//! upper-rate exponents (white and colored noise), excess-risk and
//! generalization-gap exponents, contraction rates, and the two series
//! asymptotics used to sanity-check them numerically.

use alloc::format;

use crate::error::{invalid, Error, Result};

/// Relative tolerance used to detect the boundary `α' = α + 1/2`.
pub const BOUNDARY_RTOL: f64 = 1e-12;

/// Whether a rate carries an extra `log N` factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogFactor {
    None,
    LogN,
}

/// Which term attains the minimum in a rate exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DominantTerm {
    /// The spread term `ρ_N`.
    Variance,
    /// The approximation term `N^(-(α'+s)/(α+p))`.
    Bias,
    /// The `N^(-1/2)` noise fluctuation of the generalization gap.
    Fluctuation,
}

/// `error = Θ(N^(-exponent))`, possibly times `log N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrediction {
    pub exponent: f64,
    pub log_factor: LogFactor,
    pub dominant_term: DominantTerm,
}

impl RatePrediction {
    /// `N^(-exponent)`, times `ln N` on the boundary branch.
    pub fn evaluate(&self, n: f64) -> f64 {
        let base = libm::pow(n, -self.exponent);
        match self.log_factor {
            LogFactor::None => base,
            LogFactor::LogN => base * libm::log(n),
        }
    }
}

/// Smoothness exponents of one experiment; `beta = 0` is white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub p: f64,
    pub s: f64,
    pub beta: f64,
}

impl Smoothness {
    pub fn new(alpha: f64, alpha_prime: f64, p: f64, s: f64) -> Self {
        Self {
            alpha,
            alpha_prime,
            p,
            s,
            beta: 0.0,
        }
    }

    /// Training smoothness seen by the estimator, `α - β`.
    pub fn effective_alpha(&self) -> f64 {
        self.alpha - self.beta
    }

    /// `min(α-β, α') + s > 0` and `min(α-β, α') + p - 1/2 > 0`.
    pub fn check_range(&self) -> Result<()> {
        let vals = [self.alpha, self.alpha_prime, self.p, self.s, self.beta];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid("smoothness exponents must be finite"));
        }
        let m = self.effective_alpha().min(self.alpha_prime);
        if m + self.s <= 0.0 {
            return Err(Error::SmoothnessRange(format!(
                "min(α-β, α') + s = {} must be positive",
                m + self.s
            )));
        }
        if m + self.p - 0.5 <= 0.0 {
            return Err(Error::SmoothnessRange(format!(
                "min(α-β, α') + p - 1/2 = {} must be positive",
                m + self.p - 0.5
            )));
        }
        Ok(())
    }

    /// Upper-rate exponent with `α` replaced by `α - β`.
    pub fn rate(&self) -> Result<RatePrediction> {
        colored_rate_exponent(self.alpha, self.alpha_prime, self.p, self.s, self.beta)
    }
}

fn on_boundary(alpha: f64, alpha_prime: f64) -> bool {
    let edge = alpha + 0.5;
    (alpha_prime - edge).abs() <= BOUNDARY_RTOL * edge.abs().max(1.0)
}

/// Exponent and log flag of `ρ_N`, capped at 1.
pub fn rho_exponent(alpha: f64, alpha_prime: f64, p: f64) -> Result<(f64, LogFactor)> {
    if !(alpha.is_finite() && alpha_prime.is_finite() && p.is_finite()) {
        return Err(invalid("exponents must be finite"));
    }
    if alpha + p <= 0.5 {
        return Err(Error::SmoothnessRange(format!(
            "α + p = {} must exceed 1/2",
            alpha + p
        )));
    }
    if on_boundary(alpha, alpha_prime) {
        return Ok((1.0, LogFactor::LogN));
    }
    if alpha_prime > alpha + 0.5 {
        return Ok((1.0, LogFactor::None));
    }
    let r = 1.0 - (alpha + 0.5 - alpha_prime) / (alpha + p);
    if r <= 0.0 {
        return Err(Error::SmoothnessRange(format!(
            "ρ_N exponent {r} is not positive"
        )));
    }
    Ok((r, LogFactor::None))
}

/// `ρ_N(α, α', p)` with natural logarithm on the boundary branch.
pub fn rho_n(alpha: f64, alpha_prime: f64, p: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let (exponent, log_factor) = rho_exponent(alpha, alpha_prime, p)?;
    Ok(RatePrediction {
        exponent,
        log_factor,
        dominant_term: DominantTerm::Variance,
    }
    .evaluate(n as f64))
}

/// `N^(1/(2(α+p)))` before flooring.
pub fn j_n_real(alpha: f64, p: f64, n: u64) -> Result<f64> {
    if !(alpha + p > 0.0) {
        return Err(invalid(format!("α + p = {} must be positive", alpha + p)));
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    Ok(libm::pow(n as f64, 1.0 / (2.0 * (alpha + p))))
}

/// Critical truncation index `J_N = floor(N^(1/(2(α+p))))`.
pub fn j_n(alpha: f64, p: f64, n: u64) -> Result<usize> {
    let x = j_n_real(alpha, p, n)?;
    // guard exact powers such as 32^(1/5) against a one-ulp undershoot
    let r = libm::round(x);
    let v = if (x - r).abs() <= 4.0 * f64::EPSILON * r.max(1.0) {
        r
    } else {
        libm::floor(x)
    };
    Ok(v as usize)
}

/// Sharp upper-rate exponent `min(ρ-exponent, (α'+s)/(α+p))`.
pub fn upper_rate_exponent(alpha: f64, alpha_prime: f64, p: f64, s: f64) -> Result<RatePrediction> {
    Smoothness::new(alpha, alpha_prime, p, s).check_range()?;
    let (rho, log_factor) = rho_exponent(alpha, alpha_prime, p)?;
    let bias = (alpha_prime + s) / (alpha + p);
    if bias < rho {
        Ok(RatePrediction {
            exponent: bias,
            log_factor: LogFactor::None,
            dominant_term: DominantTerm::Bias,
        })
    } else {
        Ok(RatePrediction {
            exponent: rho,
            log_factor,
            dominant_term: DominantTerm::Variance,
        })
    }
}

/// Upper-rate exponent under colored noise with eigenvalues `Θ(j^(-2β))`.
pub fn colored_rate_exponent(
    alpha: f64,
    alpha_prime: f64,
    p: f64,
    s: f64,
    beta: f64,
) -> Result<RatePrediction> {
    if !(beta >= 0.0) {
        return Err(invalid(format!("noise smoothness must be nonnegative, got {beta}")));
    }
    let sm = Smoothness {
        alpha,
        alpha_prime,
        p,
        s,
        beta,
    };
    sm.check_range()?;
    upper_rate_exponent(alpha - beta, alpha_prime, p, s)
}

/// In-distribution excess-risk exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessRiskExponents {
    pub upper: RatePrediction,
    /// `(α+p-1/2)/(α+p)`.
    pub variance_exponent: f64,
    /// `(α+s)/(α+p)`.
    pub bias_exponent: f64,
}

pub fn excess_risk_exponents(alpha: f64, p: f64, s: f64) -> Result<ExcessRiskExponents> {
    let upper = upper_rate_exponent(alpha, alpha, p, s)?;
    Ok(ExcessRiskExponents {
        upper,
        variance_exponent: (alpha + p - 0.5) / (alpha + p),
        bias_exponent: (alpha + s) / (alpha + p),
    })
}

/// `Σ_{J_N < j ≤ J} j^(-2α) (ℓ†_j)²` over the supplied truth modes.
pub fn excess_risk_lower_tail(alpha: f64, p: f64, truth: &[f64], n: u64) -> Result<f64> {
    let jn = j_n(alpha, p, n)?;
    Ok(truth
        .iter()
        .enumerate()
        .skip(jn)
        .map(|(i, l)| libm::pow((i + 1) as f64, -2.0 * alpha) * l * l)
        .sum())
}

/// Generalization-gap exponent `min(1/2, (α+p-1/2)/(α+p))`.
pub fn gap_rate_exponent(alpha: f64, p: f64) -> Result<RatePrediction> {
    if !(alpha.is_finite() && p.is_finite()) {
        return Err(invalid("exponents must be finite"));
    }
    if alpha + p <= 0.5 {
        return Err(Error::SmoothnessRange(format!(
            "α + p = {} must exceed 1/2",
            alpha + p
        )));
    }
    let v = (alpha + p - 0.5) / (alpha + p);
    if v < 0.5 {
        Ok(RatePrediction {
            exponent: v,
            log_factor: LogFactor::None,
            dominant_term: DominantTerm::Variance,
        })
    } else {
        Ok(RatePrediction {
            exponent: 0.5,
            log_factor: LogFactor::None,
            dominant_term: DominantTerm::Fluctuation,
        })
    }
}

/// Posterior contraction rate `ε_N = N^(-r/2)` (times `√ln N` on the boundary).
pub fn contraction_rate(alpha: f64, alpha_prime: f64, p: f64, s: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let r = upper_rate_exponent(alpha, alpha_prime, p, s)?;
    let nf = n as f64;
    let base = libm::pow(nf, -r.exponent / 2.0);
    Ok(match r.log_factor {
        LogFactor::None => base,
        LogFactor::LogN => base * libm::sqrt(libm::log(nf)),
    })
}

/// Slowly varying factor `S(x) = (ln(e + x))^q`; `q = 0` gives `S ≡ 1`.
pub fn slowly_varying(q: f64, x: f64) -> f64 {
    if q == 0.0 {
        1.0
    } else {
        libm::pow(libm::log(core::f64::consts::E + x), q)
    }
}

/// Predicted order of `Σ_{j ≤ N^(1/u)} j^(-t) (1 + N j^(-u))^(-v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOrder {
    pub value: f64,
    pub log_factor: LogFactor,
}

/// Three-branch order of the head sum for `t > 1`, `u > 0`, `v ≥ 0`.
pub fn head_sum_order(t: f64, u: f64, v: f64, n: u64) -> Result<SeriesOrder> {
    if !(t > 1.0 && u > 0.0 && v >= 0.0) || n < 2 {
        return Err(invalid("need t > 1, u > 0, v >= 0 and N >= 2"));
    }
    let nf = n as f64;
    let k = (t - 1.0) / u;
    let tol = BOUNDARY_RTOL * k.abs().max(v.abs()).max(1.0);
    Ok(if (k - v).abs() <= tol {
        SeriesOrder {
            value: libm::pow(nf, -v) * libm::log(nf),
            log_factor: LogFactor::LogN,
        }
    } else if k < v {
        SeriesOrder {
            value: libm::pow(nf, -k),
            log_factor: LogFactor::None,
        }
    } else {
        SeriesOrder {
            value: libm::pow(nf, -v),
            log_factor: LogFactor::None,
        }
    })
}

/// `Σ_{j ≤ N^(1/u)} j^(-t) (1 + N j^(-u))^(-v)`, summed directly.
pub fn head_sum(t: f64, u: f64, v: f64, n: u64) -> f64 {
    let nf = n as f64;
    let top = libm::floor(libm::pow(nf, 1.0 / u)) as u64;
    (1..=top)
        .map(|j| {
            let jf = j as f64;
            libm::pow(jf, -t) * libm::pow(1.0 + nf * libm::pow(jf, -u), -v)
        })
        .sum()
}

/// Both sides of the tail envelope
/// `Σ_{j > N^(1/u)} j^(-t) ξ_j² ≤ N^(-(t+2q)/u) Σ_{j > N^(1/u)} j^(2q) ξ_j²`
/// evaluated over the supplied (finite) `ξ`.
pub fn tail_envelope(xi: &[f64], t: f64, q: f64, u: f64, n: u64) -> Result<(f64, f64)> {
    if !(u > 0.0 && t >= -2.0 * q) || n == 0 {
        return Err(invalid("need u > 0, t >= -2q and N >= 1"));
    }
    let nf = n as f64;
    let cut = libm::pow(nf, 1.0 / u);
    let mut lhs = 0.0;
    let mut sob = 0.0;
    for (i, x) in xi.iter().enumerate() {
        let jf = (i + 1) as f64;
        if jf > cut {
            lhs += libm::pow(jf, -t) * x * x;
            sob += libm::pow(jf, 2.0 * q) * x * x;
        }
    }
    Ok((lhs, libm::pow(nf, -(t + 2.0 * q) / u) * sob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::TruthKind;

    fn table_exponent(kind: TruthKind, alpha_prime: f64, z: f64) -> f64 {
        let s = kind.s_star().unwrap();
        upper_rate_exponent(4.5, alpha_prime, s + 0.5 + z, s)
            .unwrap()
            .exponent
    }

    #[test]
    fn rho_examples() {
        assert!((rho_n(4.5, 4.5, -2.0, 1024).unwrap() - 0.00390625).abs() < 1e-16);
        let b = rho_n(1.0, 1.5, 0.0, 10).unwrap();
        assert!((b - 0.1 * 10f64.ln()).abs() < 1e-15);
        assert!((b - 0.23026).abs() < 1e-5);
        assert!((rho_n(1.0, 3.0, 0.0, 1000).unwrap() - 0.001).abs() < 1e-18);
        assert!(rho_n(0.5, 0.2, 0.0, 10).is_err());
    }

    #[test]
    fn j_n_examples() {
        assert_eq!(j_n(4.5, -2.0, 32).unwrap(), 2);
        assert_eq!(j_n(4.5, -2.0, 100).unwrap(), 2);
        assert_eq!(j_n(4.5, -2.0, 1).unwrap(), 1);
        assert_eq!(j_n(1.0, 0.5, 1 << 21).unwrap(), 128);
        assert!(j_n(1.0, -1.0, 8).is_err());
    }

    #[test]
    fn table_values_and_branches() {
        let m = upper_rate_exponent(4.5, 4.5, -2.0, -2.5).unwrap();
        assert!((m.exponent - 0.8).abs() < 1e-12);
        assert_eq!(m.dominant_term, DominantTerm::Variance);
        let c = upper_rate_exponent(4.5, 4.5, 2.75, 1.5).unwrap();
        assert!((c.exponent - 6.0 / 7.25).abs() < 1e-12);
        assert_eq!(c.dominant_term, DominantTerm::Bias);
        assert!((table_exponent(TruthKind::NegLaplacian, 4.0, 0.0) - 0.6).abs() < 1e-12);
        let capped = upper_rate_exponent(4.5, 5.25, -2.0, -2.5).unwrap();
        assert_eq!(capped.exponent, 1.0);
        assert_eq!(capped.log_factor, LogFactor::None);
        let edge = upper_rate_exponent(4.5, 5.0, -2.0, -2.5).unwrap();
        assert_eq!(edge.log_factor, LogFactor::LogN);
    }

    #[test]
    fn colored_examples() {
        let white = upper_rate_exponent(4.5, 4.5, -2.0, -2.5).unwrap();
        assert_eq!(colored_rate_exponent(4.5, 4.5, -2.0, -2.5, 0.0).unwrap(), white);
        // α' = 4.5 exceeds (α-β) + 1/2 = 4, so the spread term is capped
        let col = colored_rate_exponent(4.5, 4.5, -2.0, -2.5, 1.0).unwrap();
        assert_eq!(col.exponent, 1.0);
        let col = colored_rate_exponent(4.5, 3.5, -2.0, -2.5, 1.0).unwrap();
        assert!((col.exponent - (1.0 - 0.5 / 1.5)).abs() < 1e-12);
        assert!(colored_rate_exponent(4.5, 4.5, -2.0, -2.5, 2.0).is_err());
    }

    #[test]
    fn colored_monotone_in_beta() {
        for ap in [2.0, 3.0, 4.5, 6.0] {
            for z in [-0.5, 0.0, 0.5] {
                let (p, s) = (-2.0 + z, -2.5);
                let mut prev = 0.0;
                for i in 0..=40 {
                    let beta = i as f64 * 0.05;
                    if let Ok(r) = colored_rate_exponent(4.5, ap, p, s, beta) {
                        assert!(r.exponent + 1e-12 >= prev);
                        prev = r.exponent;
                    }
                }
            }
        }
    }

    #[test]
    fn excess_and_gap_examples() {
        let e = excess_risk_exponents(4.5, -2.0, -2.5).unwrap();
        assert!((e.upper.exponent - 0.8).abs() < 1e-12);
        assert_eq!(e.upper, upper_rate_exponent(4.5, 4.5, -2.0, -2.5).unwrap());
        let e = excess_risk_exponents(4.5, 2.75, 1.5).unwrap();
        assert!((e.upper.exponent - 0.828).abs() < 5e-4);
        assert_eq!(gap_rate_exponent(0.6, 0.4).unwrap().exponent, 0.5);
        assert_eq!(gap_rate_exponent(2.0, 0.5).unwrap().exponent, 0.5);
        assert!((gap_rate_exponent(0.75, 0.0).unwrap().exponent - 1.0 / 3.0).abs() < 1e-15);
        assert!(gap_rate_exponent(0.5, 0.0).is_err());
    }

    #[test]
    fn contraction_examples() {
        let r = contraction_rate(4.5, 4.5, -2.0, -2.5, 1 << 20).unwrap();
        assert!((r - 0.00390625).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 1..30 {
            let v = contraction_rate(4.5, 5.0, -2.0, -2.5, 1u64 << k).unwrap();
            assert!(v <= prev || k < 3);
            prev = v;
        }
    }

    #[test]
    fn lower_tail_counts_only_modes_past_jn() {
        let truth = [1.0; 10];
        // J_N = 2 at N = 32 with α + p = 2.5
        let t = excess_risk_lower_tail(4.5, -2.0, &truth, 32).unwrap();
        let expected: f64 = (3..=10).map(|j| (j as f64).powf(-9.0)).sum();
        assert!((t - expected).abs() < 1e-18);
    }

    #[test]
    fn head_sum_boundary_has_log() {
        let o = head_sum_order(3.0, 2.0, 1.0, 1 << 16).unwrap();
        assert_eq!(o.log_factor, LogFactor::LogN);
        let o = head_sum_order(3.0, 2.0, 0.5, 1 << 16).unwrap();
        assert_eq!(o.value, libm::pow(65536.0, -0.5));
        assert!(head_sum_order(1.0, 1.0, 1.0, 16).is_err());
    }

    #[test]
    fn tail_envelope_holds_for_inverse_laplacian() {
        let xi: alloc::vec::Vec<f64> = (1..=4096)
            .map(|j| TruthKind::InvNegLaplacian.eigenvalue(j).unwrap())
            .collect();
        for k in [4, 8, 12, 16] {
            let (lhs, rhs) = tail_envelope(&xi, 1.0, 1.0, 2.0, 1 << k).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
