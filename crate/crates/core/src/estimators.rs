//! Empirical and smoothed spectral estimators, the cutoff schedule, its
//! bias–variance bound, and a boundary-reflected bump-kernel KDE.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;
use crate::sampling::SampleSet;
use crate::spectral::{basis_row, cube_len, CoefficientField, FieldKind};

const SAMPLE_CHUNK: usize = 256;

/// Sample averages of every basis function with `‖ξ‖_∞ ≤ k`. `θ_0` is set to
/// exactly 1.
pub fn empirical_coeffs(s: &SampleSet, k: usize) -> Result<CoefficientField> {
    let d = s.dim();
    let len = cube_len(d, k).ok_or_else(|| invalid("band cube overflows"))?;
    let n = s.n();
    // Fixed chunking keeps the summation order independent of scheduling.
    let chunks: Vec<&[f64]> = s.flat().chunks(SAMPLE_CHUNK * d).collect();
    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            let mut rows = vec![0.0; d * (k + 1)];
            let mut outer = vec![0.0; len];
            for p in chunk.chunks_exact(d) {
                for (i, &t) in p.iter().enumerate() {
                    basis_row(t, &mut rows[i * (k + 1)..(i + 1) * (k + 1)]);
                }
                if d == 1 {
                    for (a, r) in acc.iter_mut().zip(&rows) {
                        *a += r;
                    }
                } else {
                    tensor_product(&rows, k + 1, &mut outer);
                    for (a, o) in acc.iter_mut().zip(&outer) {
                        *a += o;
                    }
                }
            }
            acc
        })
        .collect();
    let mut coeffs = vec![0.0; len];
    for part in &partials {
        for (c, p) in coeffs.iter_mut().zip(part) {
            *c += p;
        }
    }
    let inv = 1.0 / n as f64;
    for c in coeffs.iter_mut() {
        *c *= inv;
    }
    coeffs[0] = 1.0;
    CoefficientField::new(d, k, FieldKind::SignedMeasure, coeffs)
}

/// Row-major outer product of `d` rows of length `side`.
fn tensor_product(rows: &[f64], side: usize, out: &mut [f64]) {
    let d = rows.len() / side;
    out[0] = 1.0;
    let mut filled = 1;
    for axis in 0..d {
        let row = &rows[axis * side..(axis + 1) * side];
        for i in (0..filled).rev() {
            let v = out[i];
            for (j, &r) in row.iter().enumerate() {
                out[i * side + j] = v * r;
            }
        }
        filled *= side;
    }
}

/// Empirical coefficients for `‖ξ‖_∞ ≤ m`, zero for `m < ‖ξ‖_∞ ≤ k`.
pub fn smoothed_estimator(s: &SampleSet, m: usize, k: usize) -> Result<CoefficientField> {
    if m > k {
        return Err(invalid(format!("cutoff M = {m} exceeds band cap K = {k}")));
    }
    Ok(empirical_coeffs(s, m)?.resized(k))
}

/// `max(1, round(c · n^{1/(2(α+β)+d)}))`.
pub fn optimal_cutoff(n: usize, alpha: f64, beta: f64, d: usize, c: f64) -> usize {
    let e = 1.0 / (2.0 * (alpha + beta) + d as f64);
    let m = (c * (n as f64).powf(e)).round();
    if m >= 1.0 {
        m as usize
    } else {
        1
    }
}

/// Smallest `K` with `K^d ≥ n`.
pub fn empirical_band(n: usize, d: usize) -> usize {
    let mut k = (n as f64).powf(1.0 / d as f64).floor() as usize;
    k = k.saturating_sub(1);
    while (k as f64).powi(d as i32) < n as f64 {
        k += 1;
    }
    k.max(1)
}

/// Constants of the upper bound `L_β sqrt(C M^d / n) + L_α L_β M^{-(α+β)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceParams {
    pub d: usize,
    pub l_alpha: f64,
    pub l_beta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
}

pub fn bias_variance_bound(n: usize, m: usize, p: &BiasVarianceParams) -> f64 {
    let mf = m as f64;
    let variance = p.l_beta * (p.c * mf.powi(p.d as i32) / n as f64).sqrt();
    let bias = p.l_alpha * p.l_beta * mf.powf(-(p.alpha + p.beta));
    variance + bias
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Smoothed,
    Empirical,
    Kde,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothed" => Ok(Self::Smoothed),
            "empirical" => Ok(Self::Empirical),
            "kde" => Ok(Self::Kde),
            other => Err(invalid(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub cutoff_m: usize,
    pub band_cap_k: usize,
    pub cutoff_constant: f64,
}

impl EstimatorConfig {
    pub fn new(cutoff_m: usize, band_cap_k: usize, cutoff_constant: f64) -> Result<Self> {
        let cfg = Self { cutoff_m, band_cap_k, cutoff_constant };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff_m > self.band_cap_k {
            return Err(invalid(format!(
                "cutoff M = {} exceeds band cap K = {}",
                self.cutoff_m, self.band_cap_k
            )));
        }
        if !(self.cutoff_constant > 0.0) {
            return Err(invalid("cutoff constant must be positive"));
        }
        Ok(())
    }

    /// The KDE bandwidth tied to the cutoff, `0.45 / M`.
    pub fn kde_bandwidth(&self) -> f64 {
        0.45 / self.cutoff_m.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub estimator: EstimatorKind,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub seed: u64,
}

/// An estimator's coefficients plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub field: CoefficientField,
    pub metadata: EstimateMeta,
}

/// Runs the chosen estimator. The empirical estimator ignores `cutoff_m`;
/// the KDE uses bandwidth `0.45 / M` and is projected onto band `K`.
pub fn estimate(kind: EstimatorKind, s: &SampleSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let k = cfg.band_cap_k;
    let field = match kind {
        EstimatorKind::Smoothed => smoothed_estimator(s, cfg.cutoff_m, k)?,
        EstimatorKind::Empirical => empirical_coeffs(s, k)?,
        EstimatorKind::Kde => kde_estimator(s, cfg.kde_bandwidth())?.project(k)?,
    };
    let m = if kind == EstimatorKind::Empirical { k } else { cfg.cutoff_m };
    Ok(Estimate {
        field,
        metadata: EstimateMeta { estimator: kind, m, k, n: s.n(), seed: s.seed },
    })
}

#[inline]
fn bump(u: f64) -> f64 {
    let q = 1.0 - 4.0 * u * u;
    if q > 0.0 {
        (-1.0 / q).exp()
    } else {
        0.0
    }
}

/// `∫_{-1/2}^{1/2} exp(-1/(1-4u²)) du`.
pub fn bump_integral() -> f64 {
    static J: OnceLock<f64> = OnceLock::new();
    *J.get_or_init(|| quadrature::adaptive(-0.5, 0.5, 1e-15, bump))
}

/// The unit-mass bump kernel `K(x) = a exp(-1/(1-4x²)) 1(|x| < 1/2)`.
pub fn bump_kernel(x: f64) -> f64 {
    bump(x) / bump_integral()
}

/// One-dimensional KDE with the bump kernel, reflected at 0 and 1.
#[derive(Debug, Clone)]
pub struct KdeEstimator {
    sorted: Vec<f64>,
    h: f64,
}

pub fn kde_estimator(s: &SampleSet, h: f64) -> Result<KdeEstimator> {
    if s.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: s.dim() });
    }
    if !(h > 0.0 && h < 0.5) {
        return Err(invalid(format!("bandwidth must lie in (0, 0.5), got {h}")));
    }
    let mut sorted = s.flat().to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(KdeEstimator { sorted, h })
}

impl KdeEstimator {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    fn window_sum(&self, centre: f64, x: f64, sign: f64, shift: f64) -> f64 {
        // Sum of K((x - (shift + sign·X_j))/h) over points whose image lies
        // within h/2 of x.
        let r = 0.5 * self.h;
        let (lo, hi) = if sign > 0.0 {
            (centre - r - shift, centre + r - shift)
        } else {
            (shift - centre - r, shift - centre + r)
        };
        let a = self.sorted.partition_point(|&v| v <= lo);
        let b = self.sorted.partition_point(|&v| v < hi);
        self.sorted[a..b].iter().map(|&xj| bump((x - (shift + sign * xj)) / self.h)).sum()
    }

    /// Density estimate at `x ∈ [0,1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let r = 0.5 * self.h;
        let mut s = self.window_sum(x, x, 1.0, 0.0);
        if x < r {
            s += self.window_sum(x, x, -1.0, 0.0);
        }
        if x > 1.0 - r {
            s += self.window_sum(x, x, -1.0, 2.0);
        }
        s / (self.sorted.len() as f64 * self.h * bump_integral())
    }

    /// Projection onto the cosine band by composite Gauss–Legendre quadrature
    /// fine enough to resolve both the kernel width and the top frequency.
    pub fn project(&self, band: usize) -> Result<CoefficientField> {
        let panels = ((16.0 / self.h).ceil() as usize).max(2 * (band + 1));
        let (xs, ws) = quadrature::composite_nodes(0.0, 1.0, panels, 8);
        let chunks: Vec<usize> = (0..xs.len()).step_by(1024).collect();
        let partials: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|&start| {
                let end = (start + 1024).min(xs.len());
                let mut acc = vec![0.0; band + 1];
                let mut row = vec![0.0; band + 1];
                for (x, w) in xs[start..end].iter().zip(&ws[start..end]) {
                    let fw = self.eval(*x) * w;
                    if fw == 0.0 {
                        continue;
                    }
                    basis_row(*x, &mut row);
                    for (a, r) in acc.iter_mut().zip(&row) {
                        *a += fw * r;
                    }
                }
                acc
            })
            .collect();
        let mut coeffs = vec![0.0; band + 1];
        for p in &partials {
            for (c, v) in coeffs.iter_mut().zip(p) {
                *c += v;
            }
        }
        coeffs[0] = 1.0;
        CoefficientField::new(1, band, FieldKind::SignedMeasure, coeffs)
    }
}
