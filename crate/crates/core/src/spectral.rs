//! Tensor cosine basis on `[0,1]^d`, band-limited coefficient fields, and
//! Sobolev-ellipsoid norms.
//!
//! A [`CoefficientField`] stores `θ_ξ` densely for every multi-index in the
//! cube `[B]^d = {0, …, B}^d`, in row-major order (the first coordinate is the
//! most significant). The basis is
//!
//! ```text
//! ψ_0(t) = 1,   ψ_k(t) = √2 cos(πkt)  (k ≥ 1),   ψ_ξ(x) = ∏_i ψ_{ξ_i}(x_i)
//! ```
//!
//! which is orthonormal under the uniform measure and bounded by `2^{d/2}`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Frequency per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        Self(coords)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `Σ ξ_i²`
    pub fn sq_norm(&self) -> usize {
        self.0.iter().map(|k| k * k).sum()
    }

    pub fn linf(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Density,
    SignedMeasure,
    Discriminator,
}

/// Dense band-limited coefficients `θ_ξ`, `ξ ∈ [band]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField")]
pub struct CoefficientField {
    dim: usize,
    band: usize,
    kind: FieldKind,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawField {
    dim: usize,
    band: usize,
    kind: FieldKind,
    coeffs: Vec<f64>,
}

impl TryFrom<RawField> for CoefficientField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        CoefficientField::new(raw.dim, raw.band, raw.kind, raw.coeffs)
    }
}

/// Number of coefficients in the cube `[band]^dim`, if it fits in `usize`.
pub fn cube_len(dim: usize, band: usize) -> Option<usize> {
    (band + 1).checked_pow(u32::try_from(dim).ok()?)
}

impl CoefficientField {
    pub fn new(dim: usize, band: usize, kind: FieldKind, coeffs: Vec<f64>) -> Result<Self> {
        let field = Self { dim, band, kind, coeffs };
        field.validate()?;
        Ok(field)
    }

    /// Re-checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidField("dimension must be at least 1".into()));
        }
        let expected = cube_len(self.dim, self.band)
            .ok_or_else(|| Error::InvalidField("band cube overflows".into()))?;
        if self.coeffs.len() != expected {
            return Err(Error::InvalidField(format!(
                "expected {expected} coefficients for dim {} band {}, got {}",
                self.dim,
                self.band,
                self.coeffs.len()
            )));
        }
        if let Some(i) = self.coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidField(format!("coefficient {i} is not finite")));
        }
        if self.kind == FieldKind::Density && self.coeffs[0] != 1.0 {
            return Err(Error::InvalidField(format!(
                "density must have unit mass, got theta_0 = {}",
                self.coeffs[0]
            )));
        }
        Ok(())
    }

    pub fn zeros(dim: usize, band: usize, kind: FieldKind) -> Self {
        let len = cube_len(dim, band).expect("band cube overflows");
        let mut coeffs = vec![0.0; len];
        if kind == FieldKind::Density {
            coeffs[0] = 1.0;
        }
        Self { dim, band, kind, coeffs }
    }

    /// The uniform density on `[0,1]^dim`.
    pub fn uniform(dim: usize, band: usize) -> Self {
        Self::zeros(dim, band, FieldKind::Density)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn side(&self) -> usize {
        self.band + 1
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mutable access to the raw coefficients. Callers that change `θ_0` of a
    /// density are responsible for [`validate`](Self::validate).
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Relabels the field. Fails if the new kind's invariants do not hold.
    pub fn with_kind(mut self, kind: FieldKind) -> Result<Self> {
        self.kind = kind;
        self.validate()?;
        Ok(self)
    }

    pub fn flat_index(&self, xi: &[usize]) -> Option<usize> {
        if xi.len() != self.dim || xi.iter().any(|&k| k > self.band) {
            return None;
        }
        Some(xi.iter().fold(0, |acc, &k| acc * self.side() + k))
    }

    pub fn multi_index(&self, flat: usize) -> MultiIndex {
        let side = self.side();
        let mut coords = vec![0; self.dim];
        let mut rest = flat;
        for c in coords.iter_mut().rev() {
            *c = rest % side;
            rest /= side;
        }
        MultiIndex(coords)
    }

    pub fn get(&self, xi: &[usize]) -> Option<f64> {
        self.flat_index(xi).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, xi: &[usize], value: f64) -> Result<()> {
        let i = self
            .flat_index(xi)
            .ok_or_else(|| invalid(format!("index {xi:?} outside band {}", self.band)))?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// `Σ ξ_i²` for every flat index, in storage order.
    pub fn sq_norms(&self) -> Vec<usize> {
        index_reductions(self.dim, self.band, |acc, k| acc + k * k)
    }

    /// `max_i ξ_i` for every flat index, in storage order.
    pub fn linf_norms(&self) -> Vec<usize> {
        index_reductions(self.dim, self.band, |acc, k| acc.max(k))
    }

    /// Zero-pads (or truncates) to a new band. Truncation drops every index
    /// with a coordinate above `band`.
    pub fn resized(&self, band: usize) -> Self {
        if band == self.band {
            return self.clone();
        }
        let mut out = Self {
            dim: self.dim,
            band,
            kind: self.kind,
            coeffs: vec![0.0; cube_len(self.dim, band).expect("band cube overflows")],
        };
        let keep = self.band.min(band);
        let mut xi = vec![0usize; self.dim];
        loop {
            let src = xi.iter().fold(0, |acc, &k| acc * self.side() + k);
            let dst = xi.iter().fold(0, |acc, &k| acc * (band + 1) + k);
            out.coeffs[dst] = self.coeffs[src];
            if !odometer(&mut xi, keep) {
                break;
            }
        }
        out
    }

    /// Sets every coefficient with `‖ξ‖_∞ > cutoff` to zero, keeping the band.
    pub fn low_pass(&self, cutoff: usize) -> Self {
        let mut out = self.clone();
        for (c, m) in out.coeffs.iter_mut().zip(self.linf_norms()) {
            if m > cutoff {
                *c = 0.0;
            }
        }
        out
    }

    /// `self − other` on the common (larger) band.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let band = self.band.max(other.band);
        let a = self.resized(band);
        let b = other.resized(band);
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
        Ok(Self { dim: self.dim, band, kind: FieldKind::SignedMeasure, coeffs })
    }

    /// Sum of `|θ_ξ|` over `ξ ≠ 0`.
    pub fn nonconstant_l1(&self) -> f64 {
        self.coeffs[1..].iter().map(|c| c.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Upper bound `|θ_0| + 2^{d/2} Σ_{ξ≠0} |θ_ξ|` on the sup norm of the expansion.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs[0].abs() + basis_bound(self.dim) * self.nonconstant_l1()
    }
}

fn index_reductions(dim: usize, band: usize, f: impl Fn(usize, usize) -> usize) -> Vec<usize> {
    let len = cube_len(dim, band).expect("band cube overflows");
    let mut out = Vec::with_capacity(len);
    let mut xi = vec![0usize; dim];
    loop {
        out.push(xi.iter().fold(0, |acc, &k| f(acc, k)));
        if !odometer(&mut xi, band) {
            break;
        }
    }
    out
}

/// Row-major increment of a multi-index over `[band]^d`. Returns false after
/// the last index.
pub(crate) fn odometer(xi: &mut [usize], band: usize) -> bool {
    for c in xi.iter_mut().rev() {
        if *c < band {
            *c += 1;
            return true;
        }
        *c = 0;
    }
    false
}

/// `(1 + ‖ξ‖²)^α` smoothness weights with radius `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevEllipsoid {
    pub alpha: f64,
    pub radius: f64,
}

impl SobolevEllipsoid {
    pub fn new(alpha: f64, radius: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("smoothness must be finite and >= 0, got {alpha}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("radius must be finite and > 0, got {radius}")));
        }
        Ok(Self { alpha, radius })
    }

    pub fn weight(&self, xi: &MultiIndex) -> f64 {
        self.weight_of_sq_norm(xi.sq_norm())
    }

    pub fn weight_of_sq_norm(&self, sq: usize) -> f64 {
        (1.0 + sq as f64).powf(self.alpha)
    }

    pub fn contains(&self, theta: &CoefficientField) -> bool {
        ellipsoid_norm(theta, self) <= self.radius
    }
}

/// Largest absolute value any basis function attains on `[0,1]^d`.
pub fn basis_bound(dim: usize) -> f64 {
    2f64.powf(dim as f64 / 2.0)
}

#[inline]
pub fn basis_1d(k: usize, t: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2 * (PI * k as f64 * t).cos()
    }
}

/// `ψ_ξ(x)`.
pub fn basis_eval(xi: &MultiIndex, x: &[f64]) -> Result<f64> {
    if xi.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: xi.dim(), got: x.len() });
    }
    Ok(xi.coords().iter().zip(x).map(|(&k, &t)| basis_1d(k, t)).product())
}

const REANCHOR: usize = 64;

/// Fills `out[k] = ψ_k(t)` for `k = 0..out.len()`.
///
/// Uses the three-term recurrence `c_{k+1} = 2 cos(πt) c_k − c_{k−1}`,
/// re-anchored with a direct cosine every 64 steps. Values at a given `k`
/// do not depend on `out.len()`.
pub fn basis_row(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    let theta = PI * t;
    let two_c = 2.0 * theta.cos();
    let mut prev = 1.0; // cos(0)
    let mut cur = theta.cos();
    #[allow(clippy::needless_range_loop)]
    for k in 1..out.len() {
        if k % REANCHOR == 0 {
            prev = (theta * (k - 1) as f64).cos();
            cur = (theta * k as f64).cos();
        } else if k > 1 {
            let next = two_c * cur - prev;
            prev = cur;
            cur = next;
        }
        out[k] = SQRT_2 * cur;
    }
}

/// `sqrt(Σ_ξ (1+‖ξ‖²)^α θ_ξ²)`.
pub fn ellipsoid_norm(theta: &CoefficientField, ell: &SobolevEllipsoid) -> f64 {
    theta
        .coeffs()
        .iter()
        .zip(theta.sq_norms())
        .map(|(c, s)| ell.weight_of_sq_norm(s) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Pointwise value of the expansion `Σ θ_ξ ψ_ξ(x)` for any field kind.
pub fn field_eval(theta: &CoefficientField, x: &[f64]) -> Result<f64> {
    if x.len() != theta.dim() {
        return Err(Error::DimensionMismatch { expected: theta.dim(), got: x.len() });
    }
    let side = theta.side();
    let mut row = vec![0.0; side];
    // Contract the last axis first; `acc` holds the partially reduced tensor.
    let mut acc: Vec<f64> = theta.coeffs().to_vec();
    for &t in x.iter().rev() {
        basis_row(t, &mut row);
        acc = acc
            .chunks_exact(side)
            .map(|chunk| chunk.iter().zip(&row).map(|(c, p)| c * p).sum())
            .collect();
    }
    Ok(acc[0])
}

/// Reusable pointwise evaluator that keeps its scratch buffers between calls.
#[derive(Debug, Clone)]
pub struct FieldEvaluator<'a> {
    field: &'a CoefficientField,
    row: Vec<f64>,
    acc: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(field: &'a CoefficientField) -> Self {
        let side = field.side();
        Self { field, row: vec![0.0; side], acc: Vec::with_capacity(field.len()), tmp: Vec::new() }
    }

    /// Panics if `x.len()` differs from the field dimension.
    pub fn eval(&mut self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.field.dim(), "point dimension");
        let side = self.field.side();
        let coeffs = self.field.coeffs();
        basis_row(x[self.field.dim() - 1], &mut self.row);
        self.acc.clear();
        self.acc.extend(
            coeffs.chunks_exact(side).map(|c| c.iter().zip(&self.row).map(|(a, b)| a * b).sum::<f64>()),
        );
        for &t in x[..self.field.dim() - 1].iter().rev() {
            basis_row(t, &mut self.row);
            self.tmp.clear();
            self.tmp.extend(
                self.acc
                    .chunks_exact(side)
                    .map(|c| c.iter().zip(&self.row).map(|(a, b)| a * b).sum::<f64>()),
            );
            std::mem::swap(&mut self.acc, &mut self.tmp);
        }
        self.acc[0]
    }
}

/// Pointwise value of a density or signed-measure expansion.
pub fn density_eval(theta: &CoefficientField, x: &[f64]) -> Result<f64> {
    if theta.kind() == FieldKind::Discriminator {
        return Err(invalid("density_eval expects a density or signed measure"));
    }
    field_eval(theta, x)
}

/// Values of the expansion on the tensor grid `nodes^d`, row-major with the
/// first coordinate most significant.
pub fn eval_on_grid(theta: &CoefficientField, nodes: &[f64]) -> Vec<f64> {
    let side = theta.side();
    let g = nodes.len();
    let mut table = vec![0.0; g * side];
    for (row, &t) in table.chunks_exact_mut(side).zip(nodes) {
        basis_row(t, row);
    }
    // Each pass contracts the leading axis against the table and appends the
    // grid axis at the end, so after `dim` passes the axis order is restored.
    let mut cur = theta.coeffs().to_vec();
    let mut lead = side;
    for _ in 0..theta.dim() {
        let rest = cur.len() / lead;
        let mut next = vec![0.0; rest * g];
        for k in 0..lead {
            let src = &cur[k * rest..(k + 1) * rest];
            for gi in 0..g {
                let p = table[gi * side + k];
                if p == 0.0 {
                    continue;
                }
                for (r, &v) in src.iter().enumerate() {
                    next[r * g + gi] += p * v;
                }
            }
        }
        cur = next;
        lead = side;
    }
    cur
}

/// CDF of a one-dimensional expansion: `θ_0 x + Σ θ_k √2 sin(πkx)/(πk)`.
pub fn cdf_1d(theta: &CoefficientField, x: f64) -> Result<f64> {
    if theta.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: theta.dim() });
    }
    let c = theta.coeffs();
    let mut s = c[0] * x;
    for (k, &ck) in c.iter().enumerate().skip(1) {
        if ck != 0.0 {
            let w = PI * k as f64;
            s += ck * SQRT_2 * (w * x).sin() / w;
        }
    }
    Ok(s)
}

/// `∫_0^x F(t) dt` for the CDF `F` of a one-dimensional expansion.
pub fn cdf_antiderivative_1d(theta: &CoefficientField, x: f64) -> Result<f64> {
    if theta.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: theta.dim() });
    }
    let c = theta.coeffs();
    let mut s = 0.5 * c[0] * x * x;
    for (k, &ck) in c.iter().enumerate().skip(1) {
        if ck != 0.0 {
            let w = PI * k as f64;
            s += ck * SQRT_2 * (1.0 - (w * x).cos()) / (w * w);
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub alpha: f64,
    pub dim: usize,
    pub band: usize,
    pub tail_exponent_margin: f64,
    pub positivity_floor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDensity {
    pub field: CoefficientField,
    /// `ellipsoid_norm(field, alpha)`.
    pub effective_radius: f64,
    /// Global amplitude applied to the power-law profile.
    pub scale: f64,
}

/// Random-sign power-law density with `|θ_ξ| ∝ (1+‖ξ‖²)^{-(α + d/2 + margin)/2}`,
/// scaled so that `2^{d/2} Σ_{ξ≠0} |θ_ξ| = 1 − floor`. The density is then
/// bounded below by `floor` everywhere.
pub fn synth_density(p: &SynthParams) -> Result<SynthDensity> {
    if !(p.positivity_floor > 0.0 && p.positivity_floor < 1.0) {
        return Err(invalid(format!("positivity floor must lie in (0,1), got {}", p.positivity_floor)));
    }
    if p.dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(p.alpha >= 0.0) {
        return Err(invalid("smoothness must be >= 0"));
    }
    let mut field = CoefficientField::uniform(p.dim, p.band);
    let ell = SobolevEllipsoid::new(p.alpha, 1.0)?;
    if p.band == 0 {
        return Ok(SynthDensity { effective_radius: ellipsoid_norm(&field, &ell), field, scale: 0.0 });
    }
    let decay = -(p.alpha + p.dim as f64 / 2.0 + p.tail_exponent_margin) / 2.0;
    let mut rng = rng::stream(rng::derive_seed(p.seed, &[0x5359_4e54]));
    let sq = field.sq_norms();
    let coeffs = field.coeffs_mut();
    for (c, &s) in coeffs.iter_mut().zip(&sq).skip(1) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *c = sign * (1.0 + s as f64).powf(decay);
    }
    let l1: f64 = coeffs[1..].iter().map(|c| c.abs()).sum();
    let scale = (1.0 - p.positivity_floor) / (basis_bound(p.dim) * l1);
    for c in coeffs[1..].iter_mut() {
        *c *= scale;
    }
    let effective_radius = ellipsoid_norm(&field, &ell);
    Ok(SynthDensity { field, effective_radius, scale })
}
