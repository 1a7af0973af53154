use proptest::prelude::*;
use sobolev_gan::estimators::EstimatorKind;
use sobolev_gan::harness::{
    fit_loglog, fit_loglog_all, render_report, run_paired_experiment, run_rate_experiment, theoretical_exponent,
    RateExperimentConfig, RateReport, Regime, ReportFormat, Truth,
};
use sobolev_gan::Error;

fn uniform_config() -> RateExperimentConfig {
    RateExperimentConfig {
        n_grid: vec![128, 256, 512, 1024, 2048, 4096],
        replicates: 20,
        cutoff_constant: 0.1,
        truth: Truth::Uniform,
        truth_band: 64,
        base_seed: 11,
        ..RateExperimentConfig::default()
    }
}

#[test]
fn uniform_truth_gives_parametric_slope() {
    let r = run_rate_experiment(&uniform_config()).unwrap();
    assert!((r.slope + 0.5).abs() < 0.1, "slope {}", r.slope);
    assert!(r.points.iter().all(|p| p.cutoff_m == 1));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cfg = RateExperimentConfig { replicates: 10, n_grid: vec![64, 128, 256], truth_band: 256, ..uniform_config() };
    let a = render_report(&run_rate_experiment(&cfg).unwrap(), ReportFormat::Json).unwrap();
    let b = render_report(&run_rate_experiment(&cfg).unwrap(), ReportFormat::Json).unwrap();
    assert_eq!(a, b);
    let other = RateExperimentConfig { base_seed: 12, ..cfg };
    let c = render_report(&run_rate_experiment(&other).unwrap(), ReportFormat::Json).unwrap();
    assert_ne!(a, c);
}

#[test]
fn csv_has_one_row_per_sample_size() {
    let cfg = RateExperimentConfig { replicates: 10, n_grid: vec![32, 64, 128, 256], truth_band: 256, ..uniform_config() };
    let r = run_rate_experiment(&cfg).unwrap();
    let csv = render_report(&r, ReportFormat::Csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,mean_error,stderr,replicates"));
    assert_eq!(lines.count(), cfg.n_grid.len());
}

#[test]
fn json_report_round_trips() {
    let cfg = RateExperimentConfig { replicates: 10, n_grid: vec![64, 128, 256], truth_band: 256, ..uniform_config() };
    let r = run_rate_experiment(&cfg).unwrap();
    let s = render_report(&r, ReportFormat::Json).unwrap();
    let back: RateReport = serde_json::from_str(&s).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.config, cfg);
}

#[test]
fn paired_runs_share_samples() {
    let cfg = RateExperimentConfig { replicates: 10, n_grid: vec![64, 128, 256], truth_band: 256, ..uniform_config() };
    let p = run_paired_experiment(&cfg).unwrap();
    assert_eq!(p.smoothed.points.len(), p.empirical.points.len());
    assert_eq!(p.empirical.config.estimator, EstimatorKind::Empirical);
    assert!((0.0..=1.0).contains(&p.win_fraction_at_largest_n));
}

#[test]
fn invalid_configurations_are_rejected() {
    let empty = RateExperimentConfig { n_grid: vec![], ..RateExperimentConfig::default() };
    assert!(matches!(empty.validate(), Err(Error::Config(_))));
    let few = RateExperimentConfig { replicates: 5, ..RateExperimentConfig::default() };
    assert!(few.validate().is_err());
    let unsorted = RateExperimentConfig { n_grid: vec![256, 128], ..RateExperimentConfig::default() };
    assert!(unsorted.validate().is_err());
    let huge = RateExperimentConfig { d: 3, truth_band: 4096, ..RateExperimentConfig::default() };
    assert!(matches!(huge.validate(), Err(Error::Infeasible(_))));
    let kde2 = RateExperimentConfig { d: 2, estimator: EstimatorKind::Kde, truth_band: 64, ..RateExperimentConfig::default() };
    assert!(kde2.validate().is_err());
}

#[test]
fn kv_parsing() {
    let text = "# rate run\nd = 1\nalpha = 2.0  # smoother\nbeta=0.5\nL = 2\nn_grid = 64, 128,256\n\
                replicates = 12\nestimator = empirical\ntruth = uniform\n";
    let cfg = RateExperimentConfig::from_kv(text).unwrap();
    assert_eq!(cfg.alpha, 2.0);
    assert_eq!(cfg.radius, 2.0);
    assert_eq!(cfg.n_grid, vec![64, 128, 256]);
    assert_eq!(cfg.estimator, EstimatorKind::Empirical);
    assert_eq!(cfg.truth, Truth::Uniform);
    assert_eq!(RateExperimentConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    assert!(RateExperimentConfig::from_kv("gamma = 1").is_err());
    assert!(RateExperimentConfig::from_kv("alpha = fast").is_err());
    assert!(RateExperimentConfig::from_kv("n_grid =").is_err());
}

#[test]
fn regimes() {
    let e = theoretical_exponent(1.0, 0.3, 1).unwrap();
    assert_eq!(e.regime, Regime::Nonparametric);
    assert!((e.exponent - 1.3 / 3.6).abs() < 1e-15);
    assert_eq!(theoretical_exponent(1.0, 2.0, 1).unwrap().regime, Regime::Parametric);
    let dl = theoretical_exponent(0.1, 0.4, 1).unwrap();
    assert_eq!(dl.regime, Regime::DiscriminatorLimited);
    assert!((dl.exponent - 0.4).abs() < 1e-15);
}

#[test]
fn guard_drops_a_bending_first_point() {
    let ns: Vec<f64> = (0..6).map(|k| 100.0 * 2f64.powi(k)).collect();
    let mut errs: Vec<f64> = ns.iter().map(|n| n.powf(-0.5)).collect();
    errs[0] *= 3.0;
    let g = fit_loglog(&ns, &errs).unwrap();
    assert!(g.guard_fired);
    assert_eq!(g.points_used, 5);
    assert!((g.slope + 0.5).abs() < 1e-12);
    let all = fit_loglog_all(&ns, &errs).unwrap();
    assert!(!all.guard_fired && all.slope < -0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_power_laws_are_recovered(p in -2.0f64..0.0, c in 0.01f64..100.0, k in 3usize..9) {
        let ns: Vec<f64> = (0..k).map(|i| 10.0 * 1.7f64.powi(i as i32)).collect();
        let errs: Vec<f64> = ns.iter().map(|n| c * n.powf(p)).collect();
        let f = fit_loglog(&ns, &errs).unwrap();
        prop_assert!((f.slope - p).abs() < 1e-10);
        prop_assert!(!f.guard_fired);
        prop_assert!(f.ci_half_width < 1e-8);
    }
}
