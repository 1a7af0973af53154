//! Samplers for spectral densities and the Gaussian sequence model.
//!
//! All samplers are pure functions of `(theta, n, seed)`. Rejection sampling
//! splits the work into fixed-size chunks, each with its own derived stream,
//! so the output is identical for any thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::spectral::{cdf_1d, density_eval, CoefficientField, FieldEvaluator, FieldKind};

/// `n` points in `[0,1]^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    pub seed: u64,
    pub source: String,
}

/// Sidecar metadata written next to a CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub n: usize,
    pub source: String,
}

impl SampleSet {
    pub fn new(dim: usize, points: Vec<f64>, seed: u64, source: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("sample dimension must be at least 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "need a positive multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if let Some(v) = points.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("coordinate {v} outside [0,1]")));
        }
        Ok(Self { dim, points, seed, source: source.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn meta(&self) -> SampleMeta {
        SampleMeta { seed: self.seed, n: self.n(), source: self.source.clone() }
    }

    /// Path of the JSON sidecar for a CSV file: `<path>.json`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the points as CSV with header `x1,…,xd` and a JSON sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((1..=self.dim).map(|i| format!("x{i}")))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        let mut side = BufWriter::new(File::create(Self::sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut side, &self.meta())?;
        side.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a CSV export. The sidecar is used when present.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = r.headers()?.len();
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: rec.len() });
            }
            for field in rec.iter() {
                points.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("bad coordinate {field:?}: {e}")))?,
                );
            }
        }
        let side = Self::sidecar_path(path);
        let (seed, source) = if side.exists() {
            let meta: SampleMeta = serde_json::from_reader(BufReader::new(File::open(side)?))?;
            (meta.seed, meta.source)
        } else {
            (0, path.display().to_string())
        };
        Self::new(dim, points, seed, source)
    }
}

/// Output of [`rejection_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionDraw {
    pub samples: SampleSet,
    pub acceptance_rate: f64,
    pub envelope: f64,
}

const CHUNK: usize = 2048;

/// Draws `n` i.i.d. points from a density by uniform-envelope rejection with
/// envelope `θ_0 + 2^{d/2} Σ_{ξ≠0} |θ_ξ|`.
pub fn rejection_sample(theta: &CoefficientField, n: usize, seed: u64) -> Result<RejectionDraw> {
    if theta.kind() != FieldKind::Density {
        return Err(invalid("rejection sampling requires a density field"));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let envelope = theta.sup_bound();
    if !(envelope > 0.0) {
        return Err(Error::InvalidField(format!("envelope bound {envelope} is not positive")));
    }
    let d = theta.dim();
    let uniform = theta.nonconstant_l1() == 0.0;
    let chunks: Vec<(usize, usize)> =
        (0..n.div_ceil(CHUNK)).map(|c| (c, CHUNK.min(n - c * CHUNK))).collect();
    let parts: Vec<Result<(Vec<f64>, u64)>> = chunks
        .par_iter()
        .map(|&(c, count)| {
            let mut rng = rng::stream(rng::derive_seed(seed, &[c as u64]));
            let mut ev = FieldEvaluator::new(theta);
            let mut out = Vec::with_capacity(count * d);
            let mut x = vec![0.0; d];
            let mut proposals = 0u64;
            while out.len() < count * d {
                proposals += 1;
                for v in x.iter_mut() {
                    *v = rng.random::<f64>();
                }
                if uniform {
                    out.extend_from_slice(&x);
                    continue;
                }
                let u = envelope * rng.random::<f64>();
                let fx = ev.eval(&x);
                if fx < -1e-12 {
                    return Err(Error::InvalidField(format!(
                        "density is negative ({fx}) at {x:?}"
                    )));
                }
                if u <= fx {
                    out.extend_from_slice(&x);
                }
            }
            Ok((out, proposals))
        })
        .collect();
    let mut points = Vec::with_capacity(n * d);
    let mut proposals = 0u64;
    for part in parts {
        let (p, k) = part?;
        points.extend(p);
        proposals += k;
    }
    let samples = SampleSet::new(d, points, seed, "rejection")?;
    Ok(RejectionDraw { samples, acceptance_rate: n as f64 / proposals as f64, envelope })
}

/// Grid size of the inverse-CDF table.
pub const INVERSE_CDF_GRID: usize = 1 << 14;

/// Inverse-CDF sampler for one-dimensional densities.
///
/// The CDF is tabulated in closed form on `2^14 + 1` equispaced nodes and the
/// quantile function is a monotone (Fritsch–Carlson) cubic Hermite
/// interpolant of the inverted table.
#[derive(Debug, Clone)]
pub struct InverseCdfSampler {
    cdf: Vec<f64>,
    xs: Vec<f64>,
    slopes: Vec<f64>,
}

impl InverseCdfSampler {
    pub fn new(theta: &CoefficientField) -> Result<Self> {
        if theta.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: theta.dim() });
        }
        if theta.kind() != FieldKind::Density {
            return Err(invalid("inverse-CDF sampling requires a density field"));
        }
        let g = INVERSE_CDF_GRID;
        let mut cdf = Vec::with_capacity(g + 1);
        let mut xs = Vec::with_capacity(g + 1);
        let mut dens = Vec::with_capacity(g + 1);
        for i in 0..=g {
            let x = i as f64 / g as f64;
            let f = cdf_1d(theta, x)?;
            if let Some(&last) = cdf.last() {
                if f < last {
                    return Err(Error::InvalidField(format!(
                        "CDF decreases near x = {x}; density is negative"
                    )));
                }
                if f == last {
                    continue;
                }
            }
            cdf.push(f);
            xs.push(x);
            dens.push(density_eval(theta, &[x])?);
        }
        // Pin the ends so that u ∈ [0,1) always maps into [0,1].
        cdf[0] = 0.0;
        *cdf.last_mut().expect("non-empty table") = 1.0;
        let slopes = fritsch_carlson(&cdf, &xs, &dens);
        Ok(Self { cdf, xs, slopes })
    }

    /// Quantile function at `u ∈ [0,1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = match self.cdf.partition_point(|&c| c <= u) {
            0 => 0,
            p if p >= self.cdf.len() => self.cdf.len() - 2,
            p => p - 1,
        };
        let (f0, f1) = (self.cdf[k], self.cdf[k + 1]);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = f1 - f0;
        let t = (u - f0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let x = h00 * x0 + h10 * h * self.slopes[k] + h01 * x1 + h11 * h * self.slopes[k + 1];
        x.clamp(x0, x1)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let mut rng = rng::stream(seed);
        let points = (0..n).map(|_| self.quantile(rng.random::<f64>())).collect();
        SampleSet::new(1, points, seed, "inverse-cdf")
    }
}

/// Monotone slopes `dx/dF` at the nodes of the inverted table.
fn fritsch_carlson(f: &[f64], x: &[f64], dens: &[f64]) -> Vec<f64> {
    let n = f.len();
    let secant: Vec<f64> = (0..n - 1).map(|k| (x[k + 1] - x[k]) / (f[k + 1] - f[k])).collect();
    let mut m: Vec<f64> = (0..n)
        .map(|k| {
            let exact = if dens[k] > 0.0 { 1.0 / dens[k] } else { f64::INFINITY };
            let lo = if k > 0 { secant[k - 1] } else { secant[0] };
            let hi = if k < n - 1 { secant[k] } else { secant[n - 2] };
            if exact.is_finite() {
                exact
            } else {
                0.5 * (lo + hi)
            }
        })
        .collect();
    for k in 0..n - 1 {
        let s = secant[k];
        let a = m[k] / s;
        let b = m[k + 1] / s;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[k] = tau * a * s;
            m[k + 1] = tau * b * s;
        }
    }
    m
}

/// Convenience wrapper: builds the table and draws once.
pub fn inverse_cdf_sample(theta: &CoefficientField, n: usize, seed: u64) -> Result<SampleSet> {
    InverseCdfSampler::new(theta)?.sample(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Rejection,
    InverseCdf,
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rejection" => Ok(Self::Rejection),
            "inverse-cdf" => Ok(Self::InverseCdf),
            other => Err(invalid(format!("unknown sampler {other:?}"))),
        }
    }
}

/// `Y_ξ = θ_ξ + n^{-1/2} Z_ξ` on the band of `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSequenceObservation {
    pub y: CoefficientField,
    pub n: f64,
    pub seed: u64,
}

pub fn gaussian_sequence_observe(
    theta: &CoefficientField,
    n: f64,
    seed: u64,
) -> Result<GaussianSequenceObservation> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(invalid(format!("effective sample size must be >= 1, got {n}")));
    }
    let sigma = n.powf(-0.5);
    let mut rng = rng::stream(seed);
    let coeffs: Vec<f64> = theta
        .coeffs()
        .iter()
        .map(|&t| {
            let z: f64 = rng.sample(StandardNormal);
            t + sigma * z
        })
        .collect();
    let y = CoefficientField::new(theta.dim(), theta.band(), FieldKind::SignedMeasure, coeffs)?;
    Ok(GaussianSequenceObservation { y, n, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::basis_1d;

    fn tilted(t1: f64) -> CoefficientField {
        let mut t = CoefficientField::uniform(1, 1);
        t.set(&[1], t1).unwrap();
        t
    }

    #[test]
    fn uniform_accepts_everything() {
        let d = rejection_sample(&CoefficientField::uniform(2, 3), 1000, 5).unwrap();
        assert_eq!(d.acceptance_rate, 1.0);
        assert_eq!(d.samples.n(), 1000);
        let mean: f64 = d.samples.flat().iter().sum::<f64>() / 2000.0;
        assert!((mean - 0.5).abs() < 0.03);
    }

    #[test]
    fn deterministic_given_seed() {
        let t = tilted(0.3);
        let a = rejection_sample(&t, 5000, 17).unwrap();
        let b = rejection_sample(&t, 5000, 17).unwrap();
        assert_eq!(a, b);
        let c = rejection_sample(&t, 5000, 18).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn rejects_negative_density() {
        let t = tilted(0.9);
        assert!(rejection_sample(&t, 2000, 1).is_err());
        assert!(InverseCdfSampler::new(&t).is_err());
    }

    #[test]
    fn inverse_cdf_matches_quantiles() {
        let t = tilted(0.2);
        let s = InverseCdfSampler::new(&t).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let x = s.quantile(u);
            assert!((cdf_1d(&t, x).unwrap() - u).abs() < 1e-9, "u={u}");
        }
        let draw = s.sample(200_000, 3).unwrap();
        let m: f64 = draw.rows().map(|p| basis_1d(1, p[0])).sum::<f64>() / 200_000.0;
        assert!((m - 0.2).abs() < 0.01);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("sgan-samples-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.csv");
        let s = rejection_sample(&tilted(0.1), 50, 2).unwrap().samples;
        s.write_csv(&path).unwrap();
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("x1\n"));
        let back = SampleSet::read_csv(&path).unwrap();
        assert_eq!(back, s);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::new(2, vec![0.1, 0.2, 0.3], 0, "x").is_err());
        assert!(SampleSet::new(1, vec![1.5], 0, "x").is_err());
        assert!(SampleSet::new(1, vec![], 0, "x").is_err());
    }

    #[test]
    fn gaussian_sequence_limits() {
        let mut t = CoefficientField::zeros(1, 99, FieldKind::SignedMeasure);
        for (i, c) in t.coeffs_mut().iter_mut().enumerate() {
            *c = (i as f64).sin();
        }
        let obs = gaussian_sequence_observe(&t, 1e12, 4).unwrap();
        let dev = obs.y.coeffs().iter().zip(t.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-5);
        let again = gaussian_sequence_observe(&t, 1e12, 4).unwrap();
        assert_eq!(obs, again);

        let zero = CoefficientField::zeros(1, 99_999, FieldKind::SignedMeasure);
        let obs = gaussian_sequence_observe(&zero, 1.0, 8).unwrap();
        let y = obs.y.coeffs();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }
}
