//! Distributional checks of the samplers and numerical checks of the series
//! asymptotics. Every band is three standard errors of the relevant estimator.

use nalgebra::DMatrix;
use oplearn_core::sampling::{
    draw_design, draw_input_design, gen_diagonal_dataset, gen_matrix_dataset, make_rng, project_design,
    replication_rng, sample_diagonal_statistics, Law, Purpose, StatsMethod,
};
use oplearn_core::spectra::{
    basis_overlap_matrix, cross_basis_variance, matern_spectrum, matern_value, SpectralSequence, TruthKind,
    CROSS_BASIS_DEFAULT_TERMS,
};
use oplearn_core::theory::{head_sum, head_sum_order, tail_envelope};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn normalized_gram_diagonal_is_chi_squared() {
    let theta2 = 2.5;
    let spec = SpectralSequence::new(vec![theta2]).unwrap();
    let n = 8;
    for method in [None, Some(StatsMethod::ExactGaussian)] {
        let samples: Vec<f64> = (0..10_000u64)
            .map(|r| {
                let mut d = replication_rng(3, 0, r, Purpose::Design);
                let mut e = replication_rng(3, 0, r, Purpose::Noise);
                let gg = match method {
                    None => {
                        let design = draw_design(&spec, n, Law::Gaussian, &mut d).unwrap();
                        gen_diagonal_dataset(&[1.0], &design, 0.1, &mut e).unwrap().suff_gg()[0]
                    }
                    Some(m) => sample_diagonal_statistics(&spec, &[1.0], 0.1, None, n, Law::Gaussian, m, &mut d, &mut e)
                        .unwrap()
                        .suff_gg()[0],
                };
                gg * n as f64 / theta2
            })
            .collect();
        let (m, v) = mean_var(&samples);
        assert!((m - 8.0).abs() < 0.12, "{method:?}: mean {m}");
        assert!((v - 16.0).abs() < 1.0, "{method:?}: var {v}");
    }
}

#[test]
fn cross_statistic_has_the_right_mean() {
    let spec = matern_spectrum(2.0, 1.0, 3).unwrap();
    let truth = [2.0, -1.0, 0.5];
    let (mut sums, mut sq) = ([0.0; 3], [0.0; 3]);
    let reps = 10_000;
    for r in 0..reps {
        let mut d = replication_rng(17, 1, r, Purpose::Design);
        let mut e = replication_rng(17, 1, r, Purpose::Noise);
        let ds = sample_diagonal_statistics(&spec, &truth, 0.4, None, 5, Law::Uniform, StatsMethod::Streaming, &mut d, &mut e)
            .unwrap();
        for j in 0..3 {
            sums[j] += ds.suff_yg()[j];
            sq[j] += ds.suff_yg()[j].powi(2);
        }
    }
    for j in 0..3 {
        let m = sums[j] / reps as f64;
        let se = ((sq[j] / reps as f64 - m * m) / reps as f64).sqrt();
        let want = spec.values()[j] * truth[j];
        assert!((m - want).abs() < 3.0 * se, "mode {j}: {m} vs {want} (se {se})");
    }
}

#[test]
fn exact_and_streamed_statistics_agree_in_law() {
    let spec = matern_spectrum(1.0, 0.8, 2).unwrap();
    let truth = [1.5, -0.5];
    let reps = 4000;
    let collect = |method: StatsMethod, seed: u64| -> Vec<[f64; 4]> {
        (0..reps)
            .map(|r| {
                let mut d = replication_rng(seed, 0, r, Purpose::Design);
                let mut e = replication_rng(seed, 0, r, Purpose::Noise);
                let ds = sample_diagonal_statistics(&spec, &truth, 0.7, None, 6, Law::Gaussian, method, &mut d, &mut e)
                    .unwrap();
                [ds.suff_gg()[0], ds.suff_gg()[1], ds.suff_yg()[0], ds.suff_yg()[1]]
            })
            .collect()
    };
    let a = collect(StatsMethod::Streaming, 1);
    let b = collect(StatsMethod::ExactGaussian, 2);
    for c in 0..4 {
        let xa: Vec<f64> = a.iter().map(|r| r[c]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r[c]).collect();
        let ((ma, va), (mb, vb)) = (mean_var(&xa), mean_var(&xb));
        let se = ((va + vb) / reps as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "stat {c}: {ma} vs {mb}");
        // variance of the sample variance for near-Gaussian data
        let se_v = (2.0 / reps as f64).sqrt() * (va + vb);
        assert!((va - vb).abs() < 3.0 * se_v, "stat {c}: var {va} vs {vb}");
    }
}

#[test]
fn projected_design_variance_matches_cross_basis_series() {
    let k = 64;
    let lam = matern_spectrum(15.0, 1.5, k).unwrap();
    let n = 100_000;
    let x = draw_input_design(&lam, n, Law::Gaussian, &mut make_rng(9, 0)).unwrap();
    let g = project_design(&x, &basis_overlap_matrix(4, k)).unwrap();
    for j in 1..=4 {
        let row: Vec<f64> = g.coeffs().row(j - 1).iter().copied().collect();
        let (_, v) = mean_var(&row);
        let want = cross_basis_variance(lam.values(), j, k).unwrap().value;
        let se = want * (2.0 / n as f64).sqrt();
        assert!((v - want).abs() < 3.0 * se, "j={j}: {v} vs {want}");
    }
}

#[test]
fn gram_diagonal_is_unbiased() {
    let lam = matern_spectrum(3.0, 1.0, 3).unwrap();
    let truth = DMatrix::identity(3, 3);
    let eye = DMatrix::identity(3, 3);
    let reps = 2000;
    let mut acc = vec![Vec::new(); 3];
    for r in 0..reps {
        let mut d = replication_rng(4, 0, r, Purpose::Design);
        let mut e = replication_rng(4, 0, r, Purpose::Noise);
        let x = draw_input_design(&lam, 10, Law::Gaussian, &mut d).unwrap();
        let ds = gen_matrix_dataset(&truth, &x, &eye, 0.1, &mut e).unwrap();
        for (k, a) in acc.iter_mut().enumerate() {
            a.push(ds.gram().unwrap()[(k, k)]);
        }
    }
    for (k, a) in acc.iter().enumerate() {
        let (m, v) = mean_var(a);
        let se = (v / reps as f64).sqrt();
        assert!((m - lam.values()[k]).abs() < 3.0 * se + 1e-15, "k={k}");
    }
}

#[test]
fn cross_basis_decay_matches_min_rule() {
    let alpha_tilde = 1.5;
    let k = CROSS_BASIS_DEFAULT_TERMS;
    let lam: Vec<f64> = (1..=k).map(|q| matern_value(15.0, alpha_tilde, q)).collect();
    let js: Vec<usize> = (0..=14).map(|i| (256.0 * 2f64.powf(i as f64 * 0.5)).round() as usize).collect();
    let xs: Vec<f64> = js.iter().map(|j| (*j as f64).ln()).collect();
    let ys: Vec<f64> = js
        .iter()
        .map(|j| cross_basis_variance(&lam, *j, k).unwrap().value.ln())
        .collect();
    let fitted = -slope(&xs, &ys);
    assert!((fitted - 3.0).abs() < 0.1, "fitted {fitted}");
}

#[test]
fn head_sums_stay_within_constant_of_predicted_order() {
    let mut worst: f64 = 1.0;
    // larger u·v - t pushes the true constant toward 2^-v/(uv - t + 1)
    for t in [1.5, 2.0, 3.0, 5.0] {
        for u in [1.0, 2.0, 3.0] {
            for v in [0.0, 0.5, 1.0] {
                for e in (8..=24).step_by(4) {
                    let n = 1u64 << e;
                    let ratio = head_sum(t, u, v, n) / head_sum_order(t, u, v, n).unwrap().value;
                    worst = worst.max(ratio).max(1.0 / ratio);
                    assert!((0.1..=10.0).contains(&ratio), "t={t} u={u} v={v} N=2^{e}: {ratio}");
                }
            }
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn tail_envelope_holds_on_the_grid() {
    let xi: Vec<f64> = (1..=1 << 14)
        .map(|j| TruthKind::InvNegLaplacian.eigenvalue(j).unwrap())
        .collect();
    for q in [0.0, 0.5, 1.0, 1.4] {
        for t in [0.0, 1.0, 4.5] {
            for u in [1.0, 2.5, 5.0] {
                for e in (8..=24).step_by(2) {
                    let (lhs, rhs) = tail_envelope(&xi, t, q, u, 1 << e).unwrap();
                    assert!(lhs <= rhs * (1.0 + 1e-12), "q={q} t={t} u={u} N=2^{e}");
                }
            }
        }
    }
}
