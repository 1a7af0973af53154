//! Rate-of-convergence experiments: configuration, the three-regime exponent,
//! Monte Carlo runs with paired estimators, slope fitting, and report output.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    bias_variance_bound, empirical_band, estimate, optimal_cutoff, BiasVarianceParams, EstimatorConfig,
    EstimatorKind,
};
use crate::metrics::sobolev_ipm;
use crate::rng;
use crate::sampling::{inverse_cdf_sample, rejection_sample, InverseCdfSampler, SampleSet, Sampler};
use crate::spectral::{cube_len, synth_density, CoefficientField, SynthParams};

/// Upper limit on coefficients per field in a rate run.
pub const MAX_COEFFICIENTS: usize = 1 << 24;

const TRUTH_STREAM: u64 = 0x7452_5554;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// `synth_density` on the truth band.
    Synth,
    Uniform,
}

impl FromStr for Truth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth" => Ok(Self::Synth),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown truth {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Radius of the discriminator ellipsoid.
    #[serde(rename = "L")]
    pub radius: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub estimator: EstimatorKind,
    pub cutoff_constant: f64,
    pub base_seed: u64,
    /// `B_max`, the band of the truth and the cap on every estimator band.
    pub truth_band: usize,
    pub truth: Truth,
    pub tail_margin: f64,
    pub positivity_floor: f64,
    pub sampler: Sampler,
}

impl Default for RateExperimentConfig {
    fn default() -> Self {
        Self {
            d: 1,
            alpha: 1.0,
            beta: 0.3,
            radius: 1.0,
            n_grid: (7..=12).map(|e| 1usize << e).collect(),
            replicates: 200,
            estimator: EstimatorKind::Smoothed,
            cutoff_constant: 1.0,
            base_seed: 0,
            truth_band: 4096,
            truth: Truth::Synth,
            tail_margin: 0.05,
            positivity_floor: 0.01,
            sampler: Sampler::Rejection,
        }
    }
}

impl RateExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.d == 0 {
            return cfg_err("d must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return cfg_err("alpha and beta must be finite and >= 0".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return cfg_err("L must be positive".into());
        }
        if self.n_grid.is_empty() {
            return cfg_err("n_grid must not be empty".into());
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return cfg_err("n_grid must be positive and strictly increasing".into());
        }
        if self.replicates < 10 {
            return cfg_err(format!("replicates must be >= 10, got {}", self.replicates));
        }
        if !(self.cutoff_constant > 0.0) {
            return cfg_err("cutoff_constant must be positive".into());
        }
        if !(self.positivity_floor > 0.0 && self.positivity_floor < 1.0) {
            return cfg_err("positivity_floor must lie in (0,1)".into());
        }
        if self.sampler == Sampler::InverseCdf && self.d != 1 {
            return cfg_err("the inverse-cdf sampler needs d = 1".into());
        }
        if self.estimator == EstimatorKind::Kde && self.d != 1 {
            return cfg_err("the kde estimator needs d = 1".into());
        }
        let n_max = *self.n_grid.last().expect("non-empty");
        let k_max = self.band_for(n_max, self.estimator);
        if k_max > self.truth_band {
            return cfg_err(format!(
                "truth_band {} is below the largest estimator band {k_max}",
                self.truth_band
            ));
        }
        let need = self.required_coefficients();
        match need {
            Some(c) if c <= MAX_COEFFICIENTS => Ok(()),
            Some(c) => Err(Error::Infeasible(format!(
                "truth band needs {c} coefficients per field, limit is {MAX_COEFFICIENTS}"
            ))),
            None => Err(Error::Infeasible("truth band coefficient count overflows".into())),
        }
    }

    /// `(B_max + 1)^d`.
    pub fn required_coefficients(&self) -> Option<usize> {
        cube_len(self.d, self.truth_band)
    }

    pub fn cutoff_for(&self, n: usize) -> usize {
        optimal_cutoff(n, self.alpha, self.beta, self.d, self.cutoff_constant)
    }

    /// Estimator band `K(n)`: the cutoff for smoothed, `⌈n^{1/d}⌉` otherwise.
    pub fn band_for(&self, n: usize, kind: EstimatorKind) -> usize {
        match kind {
            EstimatorKind::Smoothed => self.cutoff_for(n),
            EstimatorKind::Empirical | EstimatorKind::Kde => empirical_band(n, self.d),
        }
    }

    /// Parses a flat `key = value` file. `#` starts a comment. `n_grid` is a
    /// comma-separated list.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn fmt::Display| Error::Config(format!("line {}: {key}: {e}", lineno + 1));
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| bad(&e))?
                };
            }
            match key {
                "d" => cfg.d = num!(),
                "alpha" => cfg.alpha = num!(),
                "beta" => cfg.beta = num!(),
                "L" => cfg.radius = num!(),
                "n_grid" => {
                    cfg.n_grid = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|e| bad(&e)))
                        .collect::<Result<_>>()?
                }
                "replicates" => cfg.replicates = num!(),
                "estimator" => cfg.estimator = value.parse().map_err(|e| bad(&e))?,
                "cutoff_constant" => cfg.cutoff_constant = num!(),
                "base_seed" => cfg.base_seed = num!(),
                "truth_band" => cfg.truth_band = num!(),
                "truth" => cfg.truth = value.parse().map_err(|e| bad(&e))?,
                "tail_margin" => cfg.tail_margin = num!(),
                "positivity_floor" => cfg.positivity_floor = num!(),
                "sampler" => cfg.sampler = value.parse().map_err(|e| bad(&e))?,
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let grid: Vec<String> = self.n_grid.iter().map(usize::to_string).collect();
        let name = |v: &dyn names::Named| v.name();
        format!(
            "d = {}\nalpha = {:?}\nbeta = {:?}\nL = {:?}\nn_grid = {}\nreplicates = {}\nestimator = {}\n\
             cutoff_constant = {:?}\nbase_seed = {}\ntruth_band = {}\ntruth = {}\ntail_margin = {:?}\n\
             positivity_floor = {:?}\nsampler = {}\n",
            self.d,
            self.alpha,
            self.beta,
            self.radius,
            grid.join(","),
            self.replicates,
            name(&self.estimator),
            self.cutoff_constant,
            self.base_seed,
            self.truth_band,
            name(&self.truth),
            self.tail_margin,
            self.positivity_floor,
            name(&self.sampler),
        )
    }
}

mod names {
    use super::*;

    pub trait Named {
        fn name(&self) -> &'static str;
    }

    impl Named for EstimatorKind {
        fn name(&self) -> &'static str {
            match self {
                EstimatorKind::Smoothed => "smoothed",
                EstimatorKind::Empirical => "empirical",
                EstimatorKind::Kde => "kde",
            }
        }
    }

    impl Named for Truth {
        fn name(&self) -> &'static str {
            match self {
                Truth::Synth => "synth",
                Truth::Uniform => "uniform",
            }
        }
    }

    impl Named for Sampler {
        fn name(&self) -> &'static str {
            match self {
                Sampler::Rejection => "rejection",
                Sampler::InverseCdf => "inverse-cdf",
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `β ≥ d/2`: rate `n^{-1/2}`.
    Parametric,
    /// Discriminator smoothness dominates: rate `n^{-β/d}`.
    DiscriminatorLimited,
    /// Rate `n^{-(α+β)/(2(α+β)+d)}`.
    Nonparametric,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Parametric => "parametric",
            Regime::DiscriminatorLimited => "discriminator-limited",
            Regime::Nonparametric => "nonparametric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub exponent: f64,
    pub regime: Regime,
}

/// Rate exponent `r` in `n^{-r}` for the smoothed plug-in.
pub fn theoretical_exponent(alpha: f64, beta: f64, d: usize) -> Result<Exponent> {
    if !(alpha >= 0.0 && beta >= 0.0) || d == 0 {
        return Err(invalid("need alpha >= 0, beta >= 0, d >= 1"));
    }
    let df = d as f64;
    if beta >= df / 2.0 {
        return Ok(Exponent { exponent: 0.5, regime: Regime::Parametric });
    }
    // Threshold β / (d/(2β) − 1) = β² / (d/2 − β); zero when β = 0.
    let threshold = if beta == 0.0 { 0.0 } else { beta * beta / (df / 2.0 - beta) };
    if alpha < threshold {
        return Ok(Exponent { exponent: beta / df, regime: Regime::DiscriminatorLimited });
    }
    Ok(Exponent { exponent: (alpha + beta) / (2.0 * (alpha + beta) + df), regime: Regime::Nonparametric })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_error: f64,
    pub stderr: f64,
    pub replicates: usize,
    #[serde(rename = "M")]
    pub cutoff_m: usize,
    #[serde(rename = "K")]
    pub band_k: usize,
    /// Bias–variance upper bound at this `n` (smoothed runs only).
    pub bound: Option<f64>,
    /// Per-replicate IPM errors in replicate order.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t half-width.
    pub ci_half_width: f64,
    pub points_used: usize,
    pub guard_fired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_ci: f64,
    pub theoretical_exponent: f64,
    pub regime: Regime,
    pub config: RateExperimentConfig,
    pub seed: u64,
    pub intercept: f64,
    pub slope_points_used: usize,
    pub guard_fired: bool,
    pub truth_effective_radius: f64,
    /// Mean error never rises by more than two standard errors along `n`.
    pub monotone_within_2se: bool,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, Vec<f64>) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    (slope, intercept, resid)
}

/// Least squares on `(ln n, ln err)` with a 95% t interval, using every
/// point.
pub fn fit_loglog_all(ns: &[f64], errs: &[f64]) -> Result<SlopeFit> {
    fit_impl(ns, errs, false)
}

/// Least squares on `(ln n, ln err)` with a 95% t interval.
///
/// Pre-asymptotic guard: when at least five points are given, the smallest
/// `n` is dropped if its residual against the fit of the remaining points
/// exceeds three times that fit's RMS residual (and `1e-9`, so exact power
/// laws are not trimmed on round-off).
pub fn fit_loglog(ns: &[f64], errs: &[f64]) -> Result<SlopeFit> {
    fit_impl(ns, errs, true)
}

const GUARD_FLOOR: f64 = 1e-9;

fn fit_impl(ns: &[f64], errs: &[f64], guard: bool) -> Result<SlopeFit> {
    if ns.len() != errs.len() || ns.len() < 3 {
        return Err(invalid("slope fit needs at least 3 paired points"));
    }
    if ns.iter().chain(errs).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("slope fit needs positive finite values"));
    }
    let x: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let mut start = 0;
    let mut guard_fired = false;
    if guard && x.len() >= 5 {
        let (s, b, r) = ols(&x[1..], &y[1..]);
        let rms = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        let r0 = y[0] - b - s * x[0];
        if r0.abs() > (3.0 * rms).max(GUARD_FLOOR) {
            start = 1;
            guard_fired = true;
        }
    }
    let (xs, ys) = (&x[start..], &y[start..]);
    let (slope, intercept, resid) = ols(xs, ys);
    let k = xs.len();
    let dof = (k - 2) as f64;
    let mx = xs.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|v| (v - mx).powi(2)).sum();
    let s2 = resid.iter().map(|v| v * v).sum::<f64>() / dof;
    let se = (s2 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| invalid(e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit { slope, intercept, ci_half_width: t * se, points_used: k, guard_fired })
}

/// Truth density for a config, with its `α`-ellipsoid norm.
pub fn truth_field(cfg: &RateExperimentConfig) -> Result<(CoefficientField, f64)> {
    match cfg.truth {
        Truth::Uniform => Ok((CoefficientField::uniform(cfg.d, cfg.truth_band), 1.0)),
        Truth::Synth => {
            let s = synth_density(&SynthParams {
                alpha: cfg.alpha,
                dim: cfg.d,
                band: cfg.truth_band,
                tail_exponent_margin: cfg.tail_margin,
                positivity_floor: cfg.positivity_floor,
                seed: rng::derive_seed(cfg.base_seed, &[TRUTH_STREAM]),
            })?;
            Ok((s.field, s.effective_radius))
        }
    }
}

enum Draw {
    Rejection,
    Inverse(InverseCdfSampler),
}

impl Draw {
    fn sample(&self, truth: &CoefficientField, n: usize, seed: u64) -> Result<SampleSet> {
        match self {
            Draw::Rejection => Ok(rejection_sample(truth, n, seed)?.samples),
            Draw::Inverse(s) => s.sample(n, seed),
        }
    }
}

/// Per-estimator error tables `errors[kind][grid point][replicate]` on
/// shared sample sets.
fn run_errors(
    cfg: &RateExperimentConfig,
    truth: &CoefficientField,
    kinds: &[EstimatorKind],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let draw = match cfg.sampler {
        Sampler::Rejection => Draw::Rejection,
        Sampler::InverseCdf => Draw::Inverse(InverseCdfSampler::new(truth)?),
    };
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_grid.len()).flat_map(|e| (0..cfg.replicates).map(move |r| (e, r))).collect();
    let results: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(e, r)| {
            let n = cfg.n_grid[e];
            let seed = rng::replicate_seed(cfg.base_seed, e as u64, r as u64);
            let samples = draw.sample(truth, n, seed)?;
            kinds
                .iter()
                .map(|&kind| {
                    let k = cfg.band_for(n, kind).min(cfg.truth_band);
                    let m = cfg.cutoff_for(n).min(k);
                    let est = estimate(kind, &samples, &EstimatorConfig::new(m, k, cfg.cutoff_constant)?)?;
                    Ok(sobolev_ipm(&est.field, truth, cfg.beta, cfg.radius)?.value)
                })
                .collect()
        })
        .collect();
    let mut out = vec![vec![Vec::with_capacity(cfg.replicates); cfg.n_grid.len()]; kinds.len()];
    for (&(e, _), res) in jobs.iter().zip(results) {
        for (ki, v) in res?.into_iter().enumerate() {
            out[ki][e].push(v);
        }
    }
    Ok(out)
}

fn build_report(
    cfg: &RateExperimentConfig,
    kind: EstimatorKind,
    errors: Vec<Vec<f64>>,
    truth_radius: f64,
) -> Result<RateReport> {
    let mut cfg = cfg.clone();
    cfg.estimator = kind;
    let bv = BiasVarianceParams {
        d: cfg.d,
        l_alpha: truth_radius,
        l_beta: cfg.radius,
        alpha: cfg.alpha,
        beta: cfg.beta,
        c: 2f64.powi(cfg.d as i32),
    };
    let points: Vec<RatePoint> = cfg
        .n_grid
        .iter()
        .zip(errors)
        .map(|(&n, errs)| {
            let r = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / r;
            let var = errs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let k = cfg.band_for(n, kind).min(cfg.truth_band);
            let m = if kind == EstimatorKind::Empirical { k } else { cfg.cutoff_for(n).min(k) };
            RatePoint {
                n,
                mean_error: mean,
                stderr: (var / r).sqrt(),
                replicates: errs.len(),
                cutoff_m: m,
                band_k: k,
                bound: (kind == EstimatorKind::Smoothed).then(|| bias_variance_bound(n, m, &bv)),
                errors: errs,
            }
        })
        .collect();
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ms: Vec<f64> = points.iter().map(|p| p.mean_error).collect();
    let fit = if points.len() >= 3 {
        fit_loglog(&ns, &ms)?
    } else {
        SlopeFit { slope: f64::NAN, intercept: f64::NAN, ci_half_width: f64::NAN, points_used: 0, guard_fired: false }
    };
    let monotone_within_2se = points
        .windows(2)
        .all(|w| w[1].mean_error <= w[0].mean_error + 2.0 * w[0].stderr.max(w[1].stderr));
    let exp = theoretical_exponent(cfg.alpha, cfg.beta, cfg.d)?;
    Ok(RateReport {
        points,
        slope: fit.slope,
        slope_ci: fit.ci_half_width,
        theoretical_exponent: exp.exponent,
        regime: exp.regime,
        seed: cfg.base_seed,
        config: cfg,
        intercept: fit.intercept,
        slope_points_used: fit.points_used,
        guard_fired: fit.guard_fired,
        truth_effective_radius: truth_radius,
        monotone_within_2se,
    })
}

/// Monte Carlo IPM error of `cfg.estimator` against the truth across `n_grid`.
pub fn run_rate_experiment(cfg: &RateExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let (truth, radius) = truth_field(cfg)?;
    let mut errors = run_errors(cfg, &truth, &[cfg.estimator])?;
    build_report(cfg, cfg.estimator, errors.remove(0), radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub smoothed: RateReport,
    pub empirical: RateReport,
    /// Fraction of replicates where the smoothed error is strictly smaller at
    /// the largest `n`.
    pub win_fraction_at_largest_n: f64,
    /// `empirical.slope − smoothed.slope`.
    pub slope_gap: f64,
}

/// Smoothed and empirical estimators on identical sample sets.
pub fn run_paired_experiment(cfg: &RateExperimentConfig) -> Result<PairedReport> {
    let mut cfg = cfg.clone();
    cfg.estimator = EstimatorKind::Empirical;
    cfg.validate()?;
    let (truth, radius) = truth_field(&cfg)?;
    let mut errors = run_errors(&cfg, &truth, &[EstimatorKind::Smoothed, EstimatorKind::Empirical])?;
    let emp = errors.pop().expect("two tables");
    let smo = errors.pop().expect("two tables");
    let (a, b) = (smo.last().expect("grid"), emp.last().expect("grid"));
    let wins = a.iter().zip(b).filter(|(s, e)| s < e).count();
    let win_fraction_at_largest_n = wins as f64 / a.len() as f64;
    let smoothed = build_report(&cfg, EstimatorKind::Smoothed, smo, radius)?;
    let empirical = build_report(&cfg, EstimatorKind::Empirical, emp, radius)?;
    let slope_gap = empirical.slope - smoothed.slope;
    Ok(PairedReport { smoothed, empirical, win_fraction_at_largest_n, slope_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(invalid(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    n: usize,
    mean_error: f64,
    stderr: f64,
    replicates: usize,
}

pub fn render_report(report: &RateReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &report.points {
                w.serialize(CsvRow { n: p.n, mean_error: p.mean_error, stderr: p.stderr, replicates: p.replicates })?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
        }
    }
}

pub fn emit_report(report: &RateReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}

/// Convenience for callers that already hold a truth field.
pub fn sample_truth(truth: &CoefficientField, sampler: Sampler, n: usize, seed: u64) -> Result<SampleSet> {
    match sampler {
        Sampler::Rejection => Ok(rejection_sample(truth, n, seed)?.samples),
        Sampler::InverseCdf => inverse_cdf_sample(truth, n, seed),
    }
}
