//! Adversarial metrics over Sobolev ellipsoids and classical cross-checks.
//!
//! For a band-limited ellipsoid `F = {f : θ(f) ∈ Θ^β(L)}` the metric
//! `sup_{f∈F} E_μ f − E_ν f` is a weighted Cauchy–Schwarz dual norm:
//!
//! ```text
//! d_F(μ, ν) = L · sqrt(Σ_ξ Δ_ξ² (1+‖ξ‖²)^{-β}),   Δ = θ(μ) − θ(ν)
//! ```
//!
//! attained by the witness `θ_ξ(f*) ∝ Δ_ξ (1+‖ξ‖²)^{-β}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;
use crate::sampling::SampleSet;
use crate::spectral::{
    cdf_1d, cdf_antiderivative_1d, eval_on_grid, CoefficientField, FieldKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmResult {
    pub value: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub radius: f64,
    pub witness: CoefficientField,
    pub active_band: usize,
}

/// `sqrt(Σ_ξ Δ_ξ² (1+‖ξ‖²)^{-β})`: the IPM over the unit-radius ellipsoid.
pub fn dual_norm(delta: &CoefficientField, beta: f64) -> f64 {
    delta
        .coeffs()
        .iter()
        .zip(delta.sq_norms())
        .map(|(d, s)| d * d * (1.0 + s as f64).powf(-beta))
        .sum::<f64>()
        .sqrt()
}

/// `Σ_ξ θ_ξ(f) Δ_ξ`, i.e. `E_μ f − E_ν f` for a discriminator `f`.
pub fn pairing(f: &CoefficientField, delta: &CoefficientField) -> Result<f64> {
    if f.dim() != delta.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: delta.dim() });
    }
    let band = f.band().max(delta.band());
    let (a, b) = (f.resized(band), delta.resized(band));
    Ok(a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x * y).sum())
}

fn check_params(beta: f64, radius: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be finite and >= 0, got {beta}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("radius must be finite and > 0, got {radius}")));
    }
    Ok(())
}

/// Closed-form IPM over the band-limited ellipsoid `Θ^β(L)`. The smaller
/// band is zero-padded.
pub fn sobolev_ipm(mu: &CoefficientField, nu: &CoefficientField, beta: f64, radius: f64) -> Result<IpmResult> {
    check_params(beta, radius)?;
    let delta = mu.difference(nu)?;
    let inv_w: Vec<f64> = delta.sq_norms().iter().map(|&s| (1.0 + s as f64).powf(-beta)).collect();
    let s = delta
        .coeffs()
        .iter()
        .zip(&inv_w)
        .map(|(d, w)| d * d * w)
        .sum::<f64>()
        .sqrt();
    let coeffs: Vec<f64> = if s > 0.0 {
        delta.coeffs().iter().zip(&inv_w).map(|(d, w)| radius * d * w / s).collect()
    } else {
        vec![0.0; delta.len()]
    };
    let active_band = delta.band();
    let witness = CoefficientField::new(delta.dim(), active_band, FieldKind::Discriminator, coeffs)?;
    Ok(IpmResult { value: radius * s, beta, radius, witness, active_band })
}

/// `½ ∫ |μ − ν|` by tensor Gauss–Legendre quadrature with `grid_resolution`
/// panels of 8 nodes per axis.
pub fn total_variation_band(mu: &CoefficientField, nu: &CoefficientField, grid_resolution: usize) -> Result<f64> {
    Ok(0.5 * l1_norm_band(&mu.difference(nu)?, grid_resolution)?)
}

/// `∫ |f|` of a spectral expansion, by the same tensor quadrature as
/// [`total_variation_band`].
pub fn l1_norm_band(field: &CoefficientField, grid_resolution: usize) -> Result<f64> {
    if grid_resolution == 0 {
        return Err(invalid("grid resolution must be positive"));
    }
    let (xs, ws) = quadrature::composite_nodes(0.0, 1.0, grid_resolution, 8);
    let vals = eval_on_grid(field, &xs);
    let g = xs.len();
    let d = field.dim();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    for v in &vals {
        let w: f64 = idx.iter().map(|&i| ws[i]).product();
        total += w * v.abs();
        for c in idx.iter_mut().rev() {
            *c += 1;
            if *c < g {
                break;
            }
            *c = 0;
        }
    }
    Ok(total)
}

/// Input to [`wasserstein1_1d`].
#[derive(Debug, Clone, Copy)]
pub enum W1Input<'a> {
    Samples(&'a SampleSet),
    Density(&'a CoefficientField),
}

const W1_PIECES: usize = 1 << 12;

/// Exact one-dimensional Wasserstein-1 distance `∫_0^1 |F_a − F_b|`.
///
/// Empirical CDFs are handled exactly. Spectral CDFs use their closed-form
/// antiderivative on a `2^12`-piece partition refined at every sample point,
/// with sign changes located by bisection.
pub fn wasserstein1_1d(a: W1Input<'_>, b: W1Input<'_>) -> Result<f64> {
    for input in [a, b] {
        let dim = match input {
            W1Input::Samples(s) => s.dim(),
            W1Input::Density(f) => f.dim(),
        };
        if dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: dim });
        }
    }
    match (a, b) {
        (W1Input::Samples(x), W1Input::Samples(y)) => Ok(w1_samples(x, y)),
        (W1Input::Samples(s), W1Input::Density(f)) | (W1Input::Density(f), W1Input::Samples(s)) => {
            w1_sample_density(s, f)
        }
        (W1Input::Density(f), W1Input::Density(g)) => {
            let diff = f.difference(g)?;
            let grid: Vec<f64> = (0..=W1_PIECES).map(|i| i as f64 / W1_PIECES as f64).collect();
            let mut total = 0.0;
            for w in grid.windows(2) {
                total += abs_piece(w[0], w[1], 0.0, &diff)?;
            }
            Ok(total)
        }
    }
}

fn sorted(s: &SampleSet) -> Vec<f64> {
    let mut v = s.flat().to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn w1_samples(x: &SampleSet, y: &SampleSet) -> f64 {
    let (a, b) = (sorted(x), sorted(y));
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
    }
    // Merge and integrate the piecewise-constant CDF gap.
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut last = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        total += (next - last) * (i as f64 / na - j as f64 / nb).abs();
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        last = next;
    }
    total
}

fn w1_sample_density(s: &SampleSet, f: &CoefficientField) -> Result<f64> {
    let pts = sorted(s);
    let n = pts.len() as f64;
    let mut breaks: Vec<f64> = (0..=W1_PIECES).map(|i| i as f64 / W1_PIECES as f64).collect();
    breaks.extend_from_slice(&pts);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    let mut k = 0usize;
    for w in breaks.windows(2) {
        while k < pts.len() && pts[k] <= w[0] {
            k += 1;
        }
        total += abs_piece(w[0], w[1], k as f64 / n, f)?;
    }
    Ok(total)
}

/// `∫_{x0}^{x1} |c − F(x)| dx` for the CDF `F` of `field`, assuming at most
/// one sign change inside the piece.
fn abs_piece(x0: f64, x1: f64, c: f64, field: &CoefficientField) -> Result<f64> {
    let integral = |p: f64, q: f64| -> Result<f64> {
        Ok(c * (q - p) - (cdf_antiderivative_1d(field, q)? - cdf_antiderivative_1d(field, p)?))
    };
    let h0 = c - cdf_1d(field, x0)?;
    let h1 = c - cdf_1d(field, x1)?;
    if h0 * h1 >= 0.0 {
        return Ok(integral(x0, x1)?.abs());
    }
    let (mut lo, mut hi) = (x0, x1);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let hm = c - cdf_1d(field, mid)?;
        if hm * h0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * x1.abs().max(1.0) {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Ok(integral(x0, r)?.abs() + integral(r, x1)?.abs())
}

/// A function sampled on the uniform grid `{0, 1/(g−1), …, 1}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub dim: usize,
    pub points_per_axis: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(dim: usize, points_per_axis: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || points_per_axis < 2 {
            return Err(invalid("degenerate grid: need dim >= 1 and at least 2 points per axis"));
        }
        let expected = points_per_axis
            .checked_pow(dim as u32)
            .ok_or_else(|| invalid("grid too large"))?;
        if values.len() != expected {
            return Err(invalid(format!("expected {expected} grid values, got {}", values.len())));
        }
        Ok(Self { dim, points_per_axis, values })
    }

    pub fn from_fn(dim: usize, points_per_axis: usize, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(invalid("degenerate grid: need at least 2 points per axis"));
        }
        let g = points_per_axis;
        let total = g.checked_pow(dim as u32).ok_or_else(|| invalid("grid too large"))?;
        let step = 1.0 / (g - 1) as f64;
        let mut x = vec![0.0; dim];
        let values = (0..total)
            .map(|flat| {
                let mut rest = flat;
                for c in x.iter_mut().rev() {
                    *c = (rest % g) as f64 * step;
                    rest /= g;
                }
                f(&x)
            })
            .collect();
        Self::new(dim, g, values)
    }

    /// Samples a spectral expansion on the grid.
    pub fn from_field(theta: &CoefficientField, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(invalid("degenerate grid: need at least 2 points per axis"));
        }
        let nodes: Vec<f64> = (0..points_per_axis).map(|i| i as f64 / (points_per_axis - 1) as f64).collect();
        Self::new(theta.dim(), points_per_axis, eval_on_grid(theta, &nodes))
    }
}

/// Lipschitz constants with respect to the `ℓ∞`, `ℓ2` and `ℓ1` metrics on
/// the domain, from forward-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub lip_inf: f64,
    pub lip_2: f64,
    pub lip_1: f64,
    pub sup_norm: f64,
}

/// A function's Lipschitz constant in the `ℓp` metric is the sup of the dual
/// norm of its gradient, so `lip_1 ≤ lip_2 ≤ lip_inf ≤ d · lip_1`.
pub fn lipschitz_norm_report(f: &GridFunction) -> Result<LipschitzReport> {
    let g = f.points_per_axis;
    let d = f.dim;
    if g < 2 {
        return Err(invalid("degenerate grid"));
    }
    let h = 1.0 / (g - 1) as f64;
    let strides: Vec<usize> = (0..d).map(|i| g.pow((d - 1 - i) as u32)).collect();
    let mut rep = LipschitzReport { lip_inf: 0.0, lip_2: 0.0, lip_1: 0.0, sup_norm: 0.0 };
    let mut grad = vec![0.0; d];
    for (flat, &v) in f.values.iter().enumerate() {
        rep.sup_norm = rep.sup_norm.max(v.abs());
        // Cells whose forward neighbours all exist.
        if strides.iter().any(|&s| (flat / s) % g == g - 1) {
            continue;
        }
        for (gi, &s) in grad.iter_mut().zip(&strides) {
            *gi = (f.values[flat + s] - v) / h;
        }
        let linf = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let l2 = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        let l1 = grad.iter().map(|x| x.abs()).sum::<f64>();
        rep.lip_1 = rep.lip_1.max(linf);
        rep.lip_2 = rep.lip_2.max(l2);
        rep.lip_inf = rep.lip_inf.max(l1);
    }
    Ok(rep)
}

/// Radius `r_k = sqrt(1 + k d^k)` with `W^{k,∞}(1) ⊂ W^{k,2}(r_k)`, reported
/// alongside ellipsoid metrics as a bound for sup-type Sobolev balls.
pub fn sup_ball_inclusion_radius(k: u32, d: usize) -> f64 {
    (1.0 + k as f64 * (d as f64).powi(k as i32)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_field(rng: &mut impl Rng, d: usize, band: usize) -> CoefficientField {
        let mut f = CoefficientField::uniform(d, band);
        for c in f.coeffs_mut()[1..].iter_mut() {
            *c = rng.random_range(-0.2..0.2);
        }
        f
    }

    #[test]
    fn identical_inputs_give_zero() {
        let f = CoefficientField::uniform(2, 3);
        let r = sobolev_ipm(&f, &f, 1.0, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.witness.coeffs().iter().all(|&c| c == 0.0));
        assert_eq!(total_variation_band(&f, &f, 4).unwrap(), 0.0);
    }

    #[test]
    fn one_term_closed_form() {
        let mu = CoefficientField::uniform(1, 1);
        let mut nu = CoefficientField::uniform(1, 1);
        nu.set(&[1], 0.1).unwrap();
        let r = sobolev_ipm(&nu, &mu, 2.0, 1.0).unwrap();
        assert!((r.value - 0.05).abs() < 1e-15);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with("{\"value\":"));
        assert!(json.contains("\"L\":1.0"));
        let back: IpmResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn band_padding_and_dimension_errors() {
        let mut a = CoefficientField::uniform(1, 1);
        a.set(&[1], 0.3).unwrap();
        let b = CoefficientField::uniform(1, 4);
        let r = sobolev_ipm(&a, &b, 1.0, 1.0).unwrap();
        assert_eq!(r.active_band, 4);
        assert!((r.value - 0.3 / 2f64.sqrt()).abs() < 1e-15);
        assert!(sobolev_ipm(&a, &CoefficientField::uniform(2, 1), 1.0, 1.0).is_err());
    }

    #[test]
    fn witness_is_feasible_and_attains_value() {
        let mut rng = rng::stream(1);
        for _ in 0..50 {
            let a = random_field(&mut rng, 2, 4);
            let b = random_field(&mut rng, 2, 4);
            let r = sobolev_ipm(&a, &b, 1.5, 0.7).unwrap();
            let ell = crate::spectral::SobolevEllipsoid::new(1.5, 0.7).unwrap();
            let n = crate::spectral::ellipsoid_norm(&r.witness, &ell);
            assert!((n - 0.7).abs() < 1e-12);
            let p = pairing(&r.witness, &a.difference(&b).unwrap()).unwrap();
            assert!((p - r.value).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_example() {
        let mu = CoefficientField::uniform(1, 1);
        let mut nu = CoefficientField::uniform(1, 1);
        nu.set(&[1], 0.1).unwrap();
        let tv = total_variation_band(&mu, &nu, 64).unwrap();
        assert!((tv - 0.1 * 2f64.sqrt() / std::f64::consts::PI).abs() < 1e-6, "{tv}");
    }

    #[test]
    fn w1_point_masses_and_identity() {
        let a = SampleSet::new(1, vec![0.2], 0, "a").unwrap();
        let b = SampleSet::new(1, vec![0.5], 0, "b").unwrap();
        let v = wasserstein1_1d(W1Input::Samples(&a), W1Input::Samples(&b)).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        let c = SampleSet::new(1, vec![0.5, 0.5], 0, "c").unwrap();
        let v = wasserstein1_1d(W1Input::Samples(&a), W1Input::Samples(&c)).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        let f = CoefficientField::uniform(1, 2);
        assert_eq!(wasserstein1_1d(W1Input::Density(&f), W1Input::Density(&f)).unwrap(), 0.0);
        let two = CoefficientField::uniform(2, 1);
        assert!(wasserstein1_1d(W1Input::Density(&two), W1Input::Density(&two)).is_err());
    }

    #[test]
    fn w1_point_mass_against_uniform() {
        // W1(δ_x, U[0,1]) = x²/2 + (1−x)²/2.
        let a = SampleSet::new(1, vec![0.3], 0, "a").unwrap();
        let u = CoefficientField::uniform(1, 0);
        let v = wasserstein1_1d(W1Input::Samples(&a), W1Input::Density(&u)).unwrap();
        assert!((v - (0.09 + 0.49) / 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn lipschitz_linear_map() {
        let f = GridFunction::from_fn(2, 33, |x| x[0] + x[1]).unwrap();
        let r = lipschitz_norm_report(&f).unwrap();
        assert!((r.lip_1 - 1.0).abs() < 1e-6);
        assert!((r.lip_2 - 2f64.sqrt()).abs() < 1e-6);
        assert!((r.lip_inf - 2.0).abs() < 1e-6);
        assert!((r.sup_norm - 2.0).abs() < 1e-12);
        let c = GridFunction::from_fn(3, 5, |_| 0.4).unwrap();
        let r = lipschitz_norm_report(&c).unwrap();
        assert_eq!((r.lip_1, r.lip_2, r.lip_inf), (0.0, 0.0, 0.0));
        assert!(GridFunction::from_fn(1, 1, |_| 0.0).is_err());
    }

    #[test]
    fn inclusion_radius() {
        assert!((sup_ball_inclusion_radius(1, 3) - 2.0).abs() < 1e-15);
        assert!((sup_ball_inclusion_radius(2, 2) - 3.0).abs() < 1e-15);
    }
}
