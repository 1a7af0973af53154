mod common;

use proptest::prelude::*;
use sobolev_gan::estimators::{
    bias_variance_bound, bump_kernel, empirical_band, empirical_coeffs, estimate, kde_estimator,
    optimal_cutoff, smoothed_estimator, BiasVarianceParams, EstimatorConfig, EstimatorKind,
};
use sobolev_gan::sampling::{rejection_sample, SampleSet};
use sobolev_gan::spectral::{basis_1d, basis_eval};

fn samples(d: usize, n: usize, seed: u64) -> SampleSet {
    let f = common::random_density(d, 3, 0.8, seed);
    rejection_sample(&f, n, seed + 1).unwrap().samples
}

#[test]
fn empirical_coefficients_match_direct_averages() {
    let s = samples(2, 700, 3);
    let e = empirical_coeffs(&s, 3).unwrap();
    for i in 1..e.len() {
        let xi = e.multi_index(i);
        let avg = s.rows().map(|p| basis_eval(&xi, p).unwrap()).sum::<f64>() / s.n() as f64;
        assert!((e.coeffs()[i] - avg).abs() < 1e-13);
    }
    assert_eq!(e.coeffs()[0], 1.0);
}

#[test]
fn smoothed_is_truncated_empirical() {
    let s = samples(1, 500, 9);
    let sm = smoothed_estimator(&s, 4, 10).unwrap();
    let emp = empirical_coeffs(&s, 10).unwrap();
    assert_eq!(sm, emp.low_pass(4));
    assert!(smoothed_estimator(&s, 11, 10).is_err());
}

#[test]
fn cutoff_examples() {
    assert_eq!(optimal_cutoff(1, 1.0, 0.3, 1, 1.0), 1);
    let m = optimal_cutoff(4096, 1.0, 0.3, 1, 1.0);
    assert_eq!(m, (4096f64.powf(1.0 / 3.6)).round() as usize);
    assert_eq!(empirical_band(4096, 1), 4096);
    assert_eq!(empirical_band(100, 2), 10);
    assert_eq!(empirical_band(101, 2), 11);
}

#[test]
fn bound_is_minimised_near_cutoff_schedule() {
    let p = BiasVarianceParams { d: 1, l_alpha: 1.0, l_beta: 1.0, alpha: 1.0, beta: 0.3, c: 2.0 };
    let n = 100_000;
    let best = (1..200).min_by(|&a, &b| {
        bias_variance_bound(n, a, &p).partial_cmp(&bias_variance_bound(n, b, &p)).unwrap()
    });
    let sched = optimal_cutoff(n, 1.0, 0.3, 1, 1.0) as f64;
    let ratio = best.unwrap() as f64 / sched;
    assert!(ratio > 0.2 && ratio < 5.0, "ratio {ratio}");
}

#[test]
fn kde_projection_matches_damped_coefficients() {
    // Away from the boundary the cosine coefficients of the reflected KDE are
    // the empirical ones damped by the kernel's Fourier transform.
    let pts: Vec<f64> = (0..50).map(|i| 0.3 + 0.4 * i as f64 / 49.0).collect();
    let s = SampleSet::new(1, pts.clone(), 0, "grid").unwrap();
    let h = 0.05;
    let kde = kde_estimator(&s, h).unwrap();
    let proj = kde.project(12).unwrap();
    for k in 1..=12usize {
        let w = std::f64::consts::PI * k as f64 * h;
        let steps = 4000;
        let du = 1.0 / steps as f64;
        let kappa: f64 = (0..steps)
            .map(|i| {
                let u = -0.5 + (i as f64 + 0.5) * du;
                bump_kernel(u) * (w * u).cos() * du
            })
            .sum::<f64>();
        let emp = pts.iter().map(|&x| basis_1d(k, x)).sum::<f64>() / pts.len() as f64;
        assert!((proj.coeffs()[k] - emp * kappa).abs() < 1e-6, "k={k}");
    }
    let mass: f64 = proj.coeffs()[0];
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn estimate_records_metadata() {
    let s = samples(1, 256, 5);
    let cfg = EstimatorConfig::new(3, 8, 1.0).unwrap();
    let e = estimate(EstimatorKind::Smoothed, &s, &cfg).unwrap();
    assert_eq!((e.metadata.m, e.metadata.k, e.metadata.n), (3, 8, 256));
    let e = estimate(EstimatorKind::Empirical, &s, &cfg).unwrap();
    assert_eq!(e.metadata.m, 8);
    let json = serde_json::to_value(&e.metadata).unwrap();
    assert!(json.get("M").is_some() && json.get("K").is_some());
    assert!(EstimatorConfig::new(9, 8, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn empirical_is_deterministic(seed in any::<u64>(), n in 10usize..600) {
        let s = samples(1, n, seed % 1000);
        prop_assert_eq!(empirical_coeffs(&s, 5).unwrap(), empirical_coeffs(&s, 5).unwrap());
    }

    #[test]
    fn bound_decreases_in_n(n in 10usize..10_000, m in 1usize..50) {
        let p = BiasVarianceParams { d: 2, l_alpha: 1.3, l_beta: 1.0, alpha: 1.0, beta: 0.5, c: 4.0 };
        prop_assert!(bias_variance_bound(2 * n, m, &p) <= bias_variance_bound(n, m, &p));
    }
}
