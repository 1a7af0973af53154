//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use sobolev_gan::spectral::CoefficientField;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(1+‖ξ‖²)` for every flat index, computed from scratch.
pub fn weights_one_plus(dim: usize, band: usize) -> Vec<f64> {
    let side = band + 1;
    let len = side.pow(dim as u32);
    (0..len)
        .map(|flat| {
            let mut rest = flat;
            let mut sq = 0usize;
            for _ in 0..dim {
                let c = rest % side;
                rest /= side;
                sq += c * c;
            }
            1.0 + sq as f64
        })
        .collect()
}

/// Best pairing `Σ_{ξ≠0} f_ξ Δ_ξ` over `{Σ (1+‖ξ‖²)^β f_ξ² ≤ L²}` found by a
/// (1+1) evolution strategy that walks the ellipsoid boundary.
pub fn es_pairing_oracle(delta: &[f64], weights: &[f64], beta: f64, radius: f64, proposals: usize, seed: u64) -> f64 {
    let w: Vec<f64> = weights.iter().map(|v| v.powf(beta)).collect();
    let dim = delta.len();
    let project = |f: &mut Vec<f64>| {
        f[0] = 0.0;
        let e: f64 = f.iter().zip(&w).map(|(x, wi)| wi * x * x).sum();
        if e > 0.0 {
            let s = radius / e.sqrt();
            for x in f.iter_mut() {
                *x *= s;
            }
        }
    };
    let score = |f: &[f64]| f.iter().zip(delta).skip(1).map(|(a, b)| a * b).sum::<f64>();
    let mut r = rng(seed);
    let mut f: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    project(&mut f);
    if score(&f) < 0.0 {
        f.iter_mut().for_each(|x| *x = -*x);
    }
    let mut best = score(&f);
    let mut sigma = radius * 0.3;
    for _ in 0..proposals {
        let mut g: Vec<f64> = f
            .iter()
            .zip(&w)
            .map(|(x, wi)| x + sigma / wi.sqrt() * r.sample::<f64, _>(StandardNormal))
            .collect();
        project(&mut g);
        // The class is symmetric, so the reflected proposal is also feasible.
        let mut s = score(&g);
        if s < 0.0 {
            g.iter_mut().for_each(|x| *x = -*x);
            s = -s;
        }
        if s > best {
            best = s;
            f = g;
            sigma *= 1.5;
        } else {
            sigma *= 1.5f64.powf(-0.25);
        }
        sigma = sigma.max(1e-14);
    }
    best.max(0.0)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.001.
pub fn ks_critical_001(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}

/// Recursive interpreter over the network JSON, independent of the library
/// evaluator.
pub fn relu_interpret(net: &Value, x: &[f64]) -> f64 {
    let layers = net["layers"].as_array().unwrap();
    let last = layers.len();
    unit_value(layers, last, 1, x)
}

fn unit_value(layers: &[Value], layer: usize, unit: usize, x: &[f64]) -> f64 {
    let weights = layers[layer - 1][unit - 1].as_object().unwrap();
    weights
        .iter()
        .map(|(name, w)| {
            let w = w.as_f64().unwrap();
            let v = match name.as_str() {
                "zero" => 0.0,
                "one" => 1.0,
                s if s.starts_with('x') => x[s[1..].parse::<usize>().unwrap() - 1],
                s => {
                    let (l, u) = s[1..].split_once('.').unwrap();
                    unit_value(layers, l.parse().unwrap(), u.parse().unwrap(), x)
                }
            };
            w * v.max(0.0)
        })
        .sum()
}

/// `(n/2) Σ (a_ξ − b_ξ)²` term by term.
pub fn analytic_gaussian_kl(a: &CoefficientField, b: &CoefficientField, n: f64) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| 0.5 * n * (x - y) * (x - y)).sum()
}

/// Random signed coefficients with `θ_0 = 1` and nonconstant ℓ1 mass capped
/// so the density stays positive.
pub fn random_density(dim: usize, band: usize, mass: f64, seed: u64) -> CoefficientField {
    let mut f = CoefficientField::uniform(dim, band);
    let mut r = rng(seed);
    let c = f.coeffs_mut();
    for v in c.iter_mut().skip(1) {
        *v = r.random_range(-1.0..1.0);
    }
    let l1: f64 = c[1..].iter().map(|v: &f64| v.abs()).sum();
    if l1 > 0.0 {
        let s = mass / (2f64.powf(dim as f64 / 2.0) * l1);
        for v in c.iter_mut().skip(1) {
            *v *= s;
        }
    }
    f.with_kind(sobolev_gan::spectral::FieldKind::Density).unwrap()
}
