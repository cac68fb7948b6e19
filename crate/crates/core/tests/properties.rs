use nalgebra::{DMatrix, DVector};
use oplearn_core::metrics::{
    conditional_risk_closed_form, excess_risk, generalization_gap_emp, relative_error_diag, weighted_sq_error,
    ErrorWeights,
};
use oplearn_core::posterior::{diag_posterior, matrix_posterior_row, posterior_from_statistics};
use oplearn_core::sampling::Dataset;
use oplearn_core::spectra::{
    cross_basis_variance, matern_spectrum, sobolev_norm, ModelConfig, SpectralSequence, TruthKind,
};
use oplearn_core::theory::{
    colored_rate_exponent, gap_rate_exponent, j_n, upper_rate_exponent, LogFactor,
};
use proptest::prelude::*;

fn positive_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..10.0, len)
}

fn signed_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #[test]
    fn matern_is_monotone(tau in 0.1f64..30.0, e in 0.05f64..6.0, modes in 2usize..300) {
        let dec = matern_spectrum(tau, e, modes).unwrap();
        prop_assert!(dec.values().windows(2).all(|w| w[1] < w[0]));
        let inc = matern_spectrum(tau, -e, modes).unwrap();
        prop_assert!(inc.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn posterior_variance_never_exceeds_prior(
        (gg, yg, prior) in (1usize..20).prop_flat_map(|j| (prop::collection::vec(0.0f64..5.0, j), signed_vec(j), positive_vec(j))),
        gamma in 1e-3f64..5.0,
        n in 1usize..1000,
    ) {
        let ds = Dataset::from_statistics(n, gamma, gg.clone(), yg.clone()).unwrap();
        let p = diag_posterior(&ds, &SpectralSequence::new(prior.clone()).unwrap(), gamma).unwrap();
        for j in 0..gg.len() {
            prop_assert!(p.variance[j] > 0.0 && p.variance[j] <= prior[j]);
            if yg[j] == 0.0 {
                prop_assert_eq!(p.mean[j], 0.0);
            }
            let w = n as f64 * prior[j] / (gamma * gamma);
            prop_assert!(p.mean[j].abs() <= w * yg[j].abs() * (1.0 + 1e-12));
            if gg[j] > 0.0 {
                let shrink = p.mean[j] / (yg[j] / gg[j]);
                if yg[j] != 0.0 {
                    prop_assert!((0.0..1.0).contains(&shrink));
                }
            }
        }
    }

    #[test]
    fn more_information_never_widens_the_posterior(
        gg in 0.0f64..5.0, extra in 0.0f64..5.0, prior in 1e-2f64..10.0, n in 1usize..100,
    ) {
        // appending a column raises N⟨gg⟩ by g²
        let before = posterior_from_statistics(&[gg], &[0.0], &[prior], |_| 1.0, n).unwrap();
        let total = (n as f64 * gg + extra) / (n + 1) as f64;
        let after = posterior_from_statistics(&[total], &[0.0], &[prior], |_| 1.0, n + 1).unwrap();
        prop_assert!(after.variance[0] <= before.variance[0] * (1.0 + 1e-14));
    }

    #[test]
    fn error_functionals_ignore_zero_weight_modes(
        (est, truth, w) in (1usize..15).prop_flat_map(|j| (signed_vec(j), signed_vec(j), positive_vec(j))),
        pad in 1usize..5,
    ) {
        let base = weighted_sq_error(&est, &truth, &ErrorWeights::new(w.clone()).unwrap()).unwrap();
        let mut e2 = est.clone();
        let mut t2 = truth.clone();
        let mut w2 = w.clone();
        for _ in 0..pad {
            e2.push(3.0);
            t2.push(-1.0);
            w2.push(0.0);
        }
        let w2 = ErrorWeights::new(w2).unwrap();
        prop_assert_eq!(weighted_sq_error(&e2, &t2, &w2).unwrap(), base);
        let wv = ErrorWeights::new(w).unwrap();
        if truth.iter().any(|t| *t != 0.0) {
            prop_assert_eq!(relative_error_diag(&e2, &t2, &w2).unwrap(), relative_error_diag(&est, &truth, &wv).unwrap());
        }
        prop_assert!(excess_risk(&est, &truth, &wv).unwrap() >= 0.0);
        prop_assert_eq!(excess_risk(&est, &truth, &wv).unwrap(), weighted_sq_error(&est, &truth, &wv).unwrap());
    }

    #[test]
    fn spread_term_is_posterior_trace(
        (gg, yg, prior, truth, w) in (1usize..12).prop_flat_map(|j| (
            prop::collection::vec(0.0f64..5.0, j), signed_vec(j), positive_vec(j), signed_vec(j), positive_vec(j))),
        gamma in 1e-2f64..3.0,
        n in 1usize..500,
    ) {
        let ds = Dataset::from_statistics(n, gamma, gg, yg).unwrap();
        let prior = SpectralSequence::new(prior).unwrap();
        let wv = ErrorWeights::new(w.clone()).unwrap();
        let r = conditional_risk_closed_form(&ds, &prior, &truth, &wv, gamma).unwrap();
        let post = diag_posterior(&ds, &prior, gamma).unwrap();
        let trace: f64 = post.variance.iter().zip(&w).map(|(v, w)| v * w).sum();
        prop_assert!((r.i3 - trace).abs() <= 1e-12 * trace.max(1e-300));
    }

    #[test]
    fn gap_with_exact_estimate_loses_first_term(
        (gg, yg, truth, th) in (1usize..12).prop_flat_map(|j| (
            prop::collection::vec(0.0f64..5.0, j), signed_vec(j), signed_vec(j), positive_vec(j))),
        gamma in 1e-2f64..3.0,
    ) {
        let ds = Dataset::from_statistics(7, gamma, gg, yg).unwrap();
        let g = generalization_gap_emp(&ds, &truth, &truth, &ErrorWeights::new(th).unwrap(), gamma).unwrap();
        prop_assert_eq!(g.j1, 0.0);
    }

    #[test]
    fn ridge_row_solves_its_system(
        (x, prior, b) in (1usize..10).prop_flat_map(|j| (
            prop::collection::vec(-1.0f64..1.0, j * (j + 3)), positive_vec(j), signed_vec(j))),
        gamma in 1e-3f64..2.0,
    ) {
        let j = prior.len();
        let xm = DMatrix::from_column_slice(j, j + 3, &x);
        let n = j + 3;
        let gram = &xm * xm.transpose() / n as f64;
        let bv = DVector::from_vec(b);
        let (row, d) = matrix_posterior_row(&gram, &bv, &prior, gamma, n).unwrap();
        prop_assert!(d.backward_error <= 1e-10);
        prop_assert!(row.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_basis_partial_sums_grow(j in 1usize..200, e in 0.6f64..3.0) {
        let lam: Vec<f64> = matern_spectrum(15.0, e, 300).unwrap().values().to_vec();
        let a = cross_basis_variance(&lam, j, 100).unwrap().value;
        let b = cross_basis_variance(&lam, j, 300).unwrap().value;
        prop_assert!(b >= a && a > 0.0);
    }

    #[test]
    fn sobolev_norm_is_monotone_in_s(v in signed_vec(20), s in -2.0f64..2.0, ds in 0.0f64..2.0) {
        prop_assert!(sobolev_norm(&v, s + ds) >= sobolev_norm(&v, s) * (1.0 - 1e-12));
    }

    #[test]
    fn rate_exponent_principles(
        alpha in 1.0f64..8.0, ap in 0.5f64..8.0, z in -0.7f64..0.7, d in 0.01f64..1.0,
    ) {
        let s = TruthKind::NegLaplacian.s_star().unwrap();
        let p = s + 0.5 + z;
        if let (Ok(a), Ok(b)) = (upper_rate_exponent(alpha, ap, p, s), upper_rate_exponent(alpha + d, ap, p, s)) {
            prop_assert!(b.exponent <= a.exponent + 1e-12);
        }
        if let (Ok(a), Ok(b)) = (upper_rate_exponent(alpha, ap, p, s), upper_rate_exponent(alpha, ap + d, p, s)) {
            prop_assert!(b.exponent + 1e-12 >= a.exponent);
            prop_assert!(b.exponent <= 1.0);
        }
    }

    #[test]
    fn valid_rates_lie_in_unit_interval(
        alpha in 0.6f64..8.0, ap in 0.0f64..8.0, p in -3.0f64..4.0, s in -3.0f64..3.0, beta in 0.0f64..1.0,
    ) {
        if let Ok(r) = colored_rate_exponent(alpha, ap, p, s, beta) {
            prop_assert!(r.exponent > 0.0 && r.exponent <= 1.0);
            prop_assert!(r.log_factor == LogFactor::None || r.exponent == 1.0);
            prop_assert!(ModelConfig::new(alpha, ap, p, s).and_then(|c| c.with_noise_smoothness(beta)).is_ok());
        }
        if let Ok(g) = gap_rate_exponent(alpha, p) {
            prop_assert!(g.exponent > 0.0 && g.exponent <= 0.5);
        }
    }

    #[test]
    fn truncation_index_is_floor(alpha in 0.6f64..8.0, p in -0.5f64..4.0, n in 1u64..1_000_000) {
        prop_assume!(alpha + p > 0.1);
        let j = j_n(alpha, p, n).unwrap() as f64;
        let x = (n as f64).powf(1.0 / (2.0 * (alpha + p)));
        prop_assert!(j <= x * (1.0 + 1e-12) && x < j + 1.0);
    }
}
