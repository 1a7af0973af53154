//! Minimax lower-bound constructions: Varshamov–Gilbert codes, frequency
//! and spatial hypothesis families, KL formulas, separation certificates and
//! Fano's bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::bump_integral;
use crate::metrics::sobolev_ipm;
use crate::quadrature;
use crate::rng;
use crate::spectral::{cube_len, ellipsoid_norm, CoefficientField, FieldKind, SobolevEllipsoid};

/// Largest number of codewords a construction may request.
pub const MAX_CODE_WORDS: usize = 1 << 16;
const RANDOM_ATTEMPTS_PER_WORD: usize = 200;
const GREEDY_MAX_BITS: usize = 24;

/// Binary code in `{0,1}^h` stored as little-endian 64-bit limbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VGCode {
    pub h: usize,
    pub words: Vec<Vec<u64>>,
    /// Smallest pairwise Hamming distance, verified over all pairs.
    pub min_distance: usize,
    /// `⌈h/8⌉`.
    pub required_distance: usize,
    pub seed: u64,
    pub method: String,
}

pub fn hamming(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

fn limbs(h: usize) -> usize {
    h.div_ceil(64)
}

fn top_mask(h: usize) -> u64 {
    match h % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl VGCode {
    /// `H`, the number of non-zero hypotheses.
    pub fn hypotheses(&self) -> usize {
        self.words.len() - 1
    }

    pub fn bit(&self, word: usize, i: usize) -> bool {
        (self.words[word][i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn weight(&self, word: usize) -> usize {
        self.words[word].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn distance(&self, j: usize, k: usize) -> usize {
        hamming(&self.words[j], &self.words[k])
    }

    /// Word as a `0`/`1` string, bit 0 first.
    pub fn word_string(&self, word: usize) -> String {
        (0..self.h).map(|i| if self.bit(word, i) { '1' } else { '0' }).collect()
    }

    /// Exhaustive check of every invariant. Returns the minimum distance.
    pub fn verify(&self) -> Result<usize> {
        if self.words.is_empty() || self.words[0].iter().any(|&w| w != 0) {
            return Err(Error::Construction("first codeword must be all zeros".into()));
        }
        let target = vg_target(self.h);
        if self.hypotheses() < target {
            return Err(Error::Construction(format!(
                "{} hypotheses, need at least {target}",
                self.hypotheses()
            )));
        }
        let n = self.words.len();
        let min = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n).map(|j| hamming(&self.words[i], &self.words[j])).min().unwrap_or(usize::MAX)
            })
            .min()
            .unwrap_or(usize::MAX);
        if min < self.required_distance {
            return Err(Error::Construction(format!(
                "pairwise distance {min} below {}",
                self.required_distance
            )));
        }
        Ok(min)
    }
}

/// `⌈2^{h/8}⌉`: the hypothesis count with `log H ≥ (h/8) log 2`.
pub fn vg_target(h: usize) -> usize {
    let t = 2f64.powf(h as f64 / 8.0).ceil();
    if t > MAX_CODE_WORDS as f64 {
        usize::MAX
    } else {
        (t as usize).max(2)
    }
}

/// Varshamov–Gilbert code with `⌈2^{h/8}⌉ + 1` words (the zero word first)
/// and pairwise distance at least `⌈h/8⌉`.
pub fn vg_code(h: usize, seed: u64) -> Result<VGCode> {
    if h < 8 {
        return Err(invalid(format!("code length must be at least 8, got {h}")));
    }
    let target = vg_target(h);
    if target == usize::MAX {
        return Err(Error::Construction(format!(
            "h = {h} requires more than {MAX_CODE_WORDS} codewords"
        )));
    }
    let dmin = h.div_ceil(8);
    let nl = limbs(h);
    let mask = top_mask(h);
    let far_enough = |words: &[Vec<u64>], cand: &[u64]| words.iter().all(|w| hamming(w, cand) >= dmin);

    let mut words = vec![vec![0u64; nl]];
    let mut rng = rng::stream(rng::derive_seed(seed, &[h as u64]));
    let mut attempts = 0usize;
    let budget = RANDOM_ATTEMPTS_PER_WORD * (target + 1);
    while words.len() <= target && attempts < budget {
        attempts += 1;
        let mut cand: Vec<u64> = (0..nl).map(|_| rng.random::<u64>()).collect();
        cand[nl - 1] &= mask;
        if far_enough(&words, &cand) {
            words.push(cand);
        }
    }
    let mut method = "random".to_string();
    if words.len() <= target && h <= GREEDY_MAX_BITS {
        words.truncate(1);
        method = "greedy".into();
        for v in 1u64..(1u64 << h) {
            let cand = vec![v];
            if far_enough(&words, &cand) {
                words.push(cand);
                if words.len() > target {
                    break;
                }
            }
        }
    }
    if words.len() <= target {
        return Err(Error::Construction(format!(
            "found {} of {target} codewords for h = {h}",
            words.len() - 1
        )));
    }
    let mut code = VGCode { h, words, min_distance: 0, required_distance: dmin, seed, method };
    code.min_distance = code.verify()?;
    Ok(code)
}

/// `(n/2) Σ_ξ (θ_j − θ_0)²`.
pub fn kl_gaussian_sequence(theta_j: &CoefficientField, theta_0: &CoefficientField, n: f64) -> Result<f64> {
    if theta_j.dim() != theta_0.dim() {
        return Err(Error::DimensionMismatch { expected: theta_0.dim(), got: theta_j.dim() });
    }
    if theta_j.band() != theta_0.band() {
        return Err(Error::BandMismatch(theta_j.band(), theta_0.band()));
    }
    let s: f64 = theta_j.coeffs().iter().zip(theta_0.coeffs()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * n * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoBound {
    /// Lower bound on `sup_θ P_θ(d(θ̂, θ) ≥ s)`.
    pub probability: f64,
    /// `s · probability`, a lower bound on the minimax risk.
    pub risk_lower_bound: f64,
    /// `kl_avg / log H`.
    pub alpha_prime: f64,
    /// Set when `alpha_prime ≥ 1/8`, where the lemma gives nothing.
    pub degenerate: bool,
}

/// Fano's bound `(√H/(1+√H)) (1 − 2α' − sqrt(2α'/log H))` clamped to `[0,1]`.
pub fn fano_bound(h: usize, s: f64, kl_avg: f64) -> Result<FanoBound> {
    if h < 2 {
        return Err(invalid(format!("Fano's lemma needs H >= 2, got {h}")));
    }
    if !(kl_avg >= 0.0) {
        return Err(invalid("average KL must be non-negative"));
    }
    let log_h = (h as f64).ln();
    let a = kl_avg / log_h;
    if a >= 0.125 {
        return Ok(FanoBound { probability: 0.0, risk_lower_bound: 0.0, alpha_prime: a, degenerate: true });
    }
    let sh = (h as f64).sqrt();
    let p = (sh / (1.0 + sh) * (1.0 - 2.0 * a - (2.0 * a / log_h).sqrt())).clamp(0.0, 1.0);
    Ok(FanoBound { probability: p, risk_lower_bound: s * p, alpha_prime: a, degenerate: false })
}

/// `round((4L² / (c log 2 · d^α))^{1/(2α+d)} · n^{1/(2α+d)})`, at least 1.
pub fn proof_cutoff(n: f64, alpha: f64, d: usize, radius: f64, c: f64) -> usize {
    let e = 1.0 / (2.0 * alpha + d as f64);
    let base = 4.0 * radius * radius / (c * std::f64::consts::LN_2 * (d as f64).powf(alpha));
    (base.powf(e) * n.powf(e)).round().max(1.0) as usize
}

/// `L / (M^{d/2} (1 + d M²)^{s/2})`.
pub fn freq_scale(m: usize, s: f64, d: usize, radius: f64) -> f64 {
    let mf = m as f64;
    radius / (mf.powf(d as f64 / 2.0) * (1.0 + d as f64 * mf * mf).powf(s / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    #[serde(rename = "L")]
    pub radius: f64,
}

/// Frequency-domain family `g_w = c_α Σ_ξ w_ξ ψ_ξ` over the cube `[M]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqFamily {
    pub params: FreqParams,
    pub code: VGCode,
    pub c_alpha: f64,
    pub c_beta: f64,
    /// Largest `ellipsoid_norm(g_w, α)` over the code.
    pub max_member_norm: f64,
    pub members_certified: bool,
    /// `c_β sqrt(Σ_ξ (1+‖ξ‖²)^β)`: norm of the sign discriminators.
    pub discriminator_norm: f64,
    pub discriminators_feasible: bool,
}

/// Builds the frequency family. The code length must equal `(M+1)^d`.
pub fn freq_hypotheses(m: usize, alpha: f64, beta: f64, d: usize, radius: f64, code: VGCode) -> Result<FreqFamily> {
    if m == 0 || d == 0 {
        return Err(invalid("M and d must be at least 1"));
    }
    let h = cube_len(d, m).ok_or_else(|| invalid("index cube overflows"))?;
    if code.h != h {
        return Err(Error::DimensionMismatch { expected: h, got: code.h });
    }
    let ell_a = SobolevEllipsoid::new(alpha, radius)?;
    SobolevEllipsoid::new(beta, radius)?;
    let c_alpha = freq_scale(m, alpha, d, radius);
    let c_beta = freq_scale(m, beta, d, radius);
    let params = FreqParams { m, alpha, beta, d, radius };
    let mut fam = FreqFamily {
        params,
        code,
        c_alpha,
        c_beta,
        max_member_norm: 0.0,
        members_certified: false,
        discriminator_norm: 0.0,
        discriminators_feasible: false,
    };
    fam.max_member_norm = (0..fam.code.words.len())
        .into_par_iter()
        .map(|j| ellipsoid_norm(&fam.member(j), &ell_a))
        .reduce(|| 0.0, f64::max);
    fam.members_certified = fam.max_member_norm <= radius + 1e-12;
    let ones = CoefficientField::zeros(d, m, FieldKind::SignedMeasure);
    let wsum: f64 = ones.sq_norms().iter().map(|&s| (1.0 + s as f64).powf(beta)).sum();
    fam.discriminator_norm = c_beta * wsum.sqrt();
    fam.discriminators_feasible = fam.discriminator_norm <= radius + 1e-12;
    Ok(fam)
}

/// `c_α c_β ⌈(M+1)^d / 8⌉`: the pairwise separation guaranteed by any
/// Varshamov–Gilbert code on the `(M+1)^d` cube, without building the code.
pub fn certified_separation_at(m: usize, alpha: f64, beta: f64, d: usize, radius: f64) -> Result<f64> {
    if m == 0 || d == 0 {
        return Err(invalid("M and d must be at least 1"));
    }
    let h = cube_len(d, m).ok_or_else(|| invalid("index cube overflows"))?;
    Ok(freq_scale(m, alpha, d, radius) * freq_scale(m, beta, d, radius) * h.div_ceil(8) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub exact_ipm: f64,
    pub lower_cert: f64,
    pub hamming: usize,
}

/// Separation of two frequency-family members: the exact Sobolev IPM and the
/// certificate `c_α c_β ρ(w, w')`, with `ρ` read off the coefficients.
pub fn separation(
    g_w: &CoefficientField,
    g_w2: &CoefficientField,
    beta: f64,
    radius: f64,
    c_alpha: f64,
    c_beta: f64,
) -> Result<Separation> {
    let exact_ipm = sobolev_ipm(g_w, g_w2, beta, radius)?.value;
    let diff = g_w.difference(g_w2)?;
    let hamming = diff.coeffs().iter().filter(|c| c.abs() > 0.5 * c_alpha).count();
    Ok(Separation { exact_ipm, lower_cert: c_alpha * c_beta * hamming as f64, hamming })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScan {
    pub pairs: usize,
    pub violations: usize,
    /// Smallest `exact_ipm − lower_cert` over all pairs.
    pub min_margin: f64,
    pub min_exact: f64,
}

impl FreqFamily {
    pub fn member(&self, j: usize) -> CoefficientField {
        let p = &self.params;
        let mut f = CoefficientField::zeros(p.d, p.m, FieldKind::SignedMeasure);
        let h = self.code.h;
        for (i, c) in f.coeffs_mut().iter_mut().enumerate().take(h) {
            if self.code.bit(j, i) {
                *c = self.c_alpha;
            }
        }
        f
    }

    pub fn separation(&self, j: usize, k: usize) -> Result<Separation> {
        separation(
            &self.member(j),
            &self.member(k),
            self.params.beta,
            self.params.radius,
            self.c_alpha,
            self.c_beta,
        )
    }

    /// Exhaustive scan of every pair of members.
    pub fn scan_pairs(&self) -> Result<PairScan> {
        let n = self.code.words.len();
        let members: Vec<CoefficientField> = (0..n).map(|j| self.member(j)).collect();
        let p = &self.params;
        let rows: Result<Vec<PairScan>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = PairScan { pairs: 0, violations: 0, min_margin: f64::INFINITY, min_exact: f64::INFINITY };
                for j in i + 1..n {
                    let sep = separation(&members[i], &members[j], p.beta, p.radius, self.c_alpha, self.c_beta)?;
                    s.pairs += 1;
                    let margin = sep.exact_ipm - sep.lower_cert;
                    if margin < -1e-12 {
                        s.violations += 1;
                    }
                    s.min_margin = s.min_margin.min(margin);
                    s.min_exact = s.min_exact.min(sep.exact_ipm);
                }
                Ok(s)
            })
            .collect();
        Ok(rows?.into_iter().fold(
            PairScan { pairs: 0, violations: 0, min_margin: f64::INFINITY, min_exact: f64::INFINITY },
            |a, b| PairScan {
                pairs: a.pairs + b.pairs,
                violations: a.violations + b.violations,
                min_margin: a.min_margin.min(b.min_margin),
                min_exact: a.min_exact.min(b.min_exact),
            },
        ))
    }

    /// `(1/H) Σ_{j≥1} KL(P_j, P_0)` in the Gaussian sequence model.
    pub fn kl_average(&self, n: f64) -> Result<f64> {
        let zero = self.member(0);
        let h = self.code.hypotheses();
        let total: f64 = (1..=h)
            .map(|j| kl_gaussian_sequence(&self.member(j), &zero, n))
            .sum::<Result<f64>>()?;
        Ok(total / h as f64)
    }

    /// `c_α c_β ⌈h/8⌉`, the separation guaranteed by the code.
    pub fn certified_separation(&self) -> f64 {
        self.c_alpha * self.c_beta * self.code.required_distance as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    /// Kernel amplitude.
    pub a: f64,
    /// `1/m`.
    pub h_n: f64,
}

/// Spatial bump family
/// `g_w = (1 + Σ_ξ w_ξ h^α φ_ξ) / (1 + c_w)` with
/// `φ_ξ(x) = ∏_i K((x_i − (ξ_i − 1/2)/m) / h)`, `ξ ∈ {1,…,m}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFamily {
    pub params: SpatialParams,
    pub code: VGCode,
    /// `(∫K)^d`.
    pub kernel_mass: f64,
    /// `(∫K²)^d`.
    pub kernel_energy: f64,
    /// Normalizers `c_w` for each codeword.
    pub c_w: Vec<f64>,
}

/// Pointwise-condition level for the spatial family.
pub const SPATIAL_CONDITION: f64 = 1.0 / 50.0;
const SPATIAL_QUAD_TOL: f64 = 1e-10;

fn bump_raw(u: f64) -> f64 {
    let q = 1.0 - 4.0 * u * u;
    if q > 0.0 {
        (-1.0 / q).exp()
    } else {
        0.0
    }
}

fn bump_sq_integral() -> f64 {
    quadrature::adaptive(-0.5, 0.5, 1e-15, |u| bump_raw(u).powi(2))
}

/// Builds the spatial family. With `a = None` the amplitude starts at the
/// unit-mass value and is halved until `max_w c_w + a^d h^α < 1/50`.
pub fn spatial_bump_family(
    m: usize,
    alpha: f64,
    beta: f64,
    d: usize,
    a: Option<f64>,
    code: VGCode,
) -> Result<SpatialFamily> {
    if m == 0 || d == 0 {
        return Err(invalid("m and d must be at least 1"));
    }
    let h = m.checked_pow(d as u32).ok_or_else(|| invalid("cell count overflows"))?;
    if code.h != h {
        return Err(Error::DimensionMismatch { expected: h, got: code.h });
    }
    let hn = 1.0 / m as f64;
    let j1 = bump_integral();
    let j2 = bump_sq_integral();
    let max_weight = (0..code.words.len()).map(|j| code.weight(j)).max().unwrap_or(0) as f64;
    let condition = |a: f64| {
        let c_max = max_weight * hn.powf(alpha) * (hn * a * j1).powi(d as i32);
        c_max + a.powi(d as i32) * hn.powf(alpha)
    };
    let a = match a {
        Some(a) => {
            if !(a > 0.0) {
                return Err(invalid("kernel amplitude must be positive"));
            }
            if condition(a) >= SPATIAL_CONDITION {
                return Err(invalid(format!(
                    "amplitude {a} violates the 1/50 condition ({})",
                    condition(a)
                )));
            }
            a
        }
        None => {
            let mut a = 1.0 / j1;
            while condition(a) >= SPATIAL_CONDITION {
                a *= 0.5;
            }
            a
        }
    };
    let kernel_mass = (a * j1).powi(d as i32);
    let kernel_energy = (a * a * j2).powi(d as i32);
    let c_w = (0..code.words.len())
        .map(|j| code.weight(j) as f64 * hn.powf(alpha) * hn.powi(d as i32) * kernel_mass)
        .collect();
    Ok(SpatialFamily {
        params: SpatialParams { m, alpha, beta, d, a, h_n: hn },
        code,
        kernel_mass,
        kernel_energy,
        c_w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlChain {
    /// `∫ g_w log(g_w / g_0)` by quadrature.
    pub kl: f64,
    /// `∫ (g_0 − g_w)² / g_w` by quadrature.
    pub chi_square: f64,
    /// `Σ_ξ w_ξ h^{2α} ∫ φ_ξ²` by quadrature.
    pub bump_energy: f64,
    /// `|w| h^{2α+d} (∫K²)^d`.
    pub closed_form: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialSeparation {
    /// `sup_v ⟨f_v, g_w − g_w'⟩ = h^β Σ_ξ |∫ φ_ξ (g_w − g_w')|`.
    pub exact: f64,
    /// `h^{α+β+d} ρ ((∫K²)^d − (∫K)^{2d}) / (1 + max c_w)`.
    pub lower_cert: f64,
    /// The normalization-free value `h^{α+β+d} ρ (∫K²)^d`.
    pub nominal: f64,
    pub hamming: usize,
}

impl SpatialFamily {
    fn kernel(&self, u: f64) -> f64 {
        self.params.a * bump_raw(u)
    }

    /// `φ_ξ(x)` for a zero-based cell index.
    fn bump_at(&self, cell: &[usize], x: &[f64]) -> f64 {
        let m = self.params.m as f64;
        cell.iter()
            .zip(x)
            .map(|(&c, &t)| self.kernel((t - (c as f64 + 0.5) / m) * m))
            .product()
    }

    fn cell_of(&self, flat: usize) -> Vec<usize> {
        let m = self.params.m;
        let mut cell = vec![0; self.params.d];
        let mut rest = flat;
        for c in cell.iter_mut().rev() {
            *c = rest % m;
            rest /= m;
        }
        cell
    }

    /// `g_w(x)` for codeword `j`.
    pub fn density(&self, j: usize, x: &[f64]) -> Result<f64> {
        let p = &self.params;
        if x.len() != p.d {
            return Err(Error::DimensionMismatch { expected: p.d, got: x.len() });
        }
        let m = p.m;
        // Only the bump of the cell containing x can be non-zero.
        let mut flat = 0usize;
        let mut cell = vec![0usize; p.d];
        for (c, &t) in cell.iter_mut().zip(x) {
            *c = ((t * m as f64).floor() as usize).min(m - 1);
            flat = flat * m + *c;
        }
        let bump = if self.code.bit(j, flat) { self.bump_at(&cell, x) } else { 0.0 };
        Ok((1.0 + p.h_n.powf(p.alpha) * bump) / (1.0 + self.c_w[j]))
    }

    /// Discriminator `f_v(x) = Σ_ξ v_ξ h^β φ_ξ(x)` with signs `v`.
    pub fn discriminator(&self, v: &[i8], x: &[f64]) -> Result<f64> {
        let p = &self.params;
        if v.len() != self.code.h {
            return Err(Error::DimensionMismatch { expected: self.code.h, got: v.len() });
        }
        let m = p.m;
        let mut flat = 0usize;
        let mut cell = vec![0usize; p.d];
        for (c, &t) in cell.iter_mut().zip(x) {
            *c = ((t * m as f64).floor() as usize).min(m - 1);
            flat = flat * m + *c;
        }
        Ok(v[flat] as f64 * p.h_n.powf(p.beta) * self.bump_at(&cell, x))
    }

    /// Integrates `f` over one cell in local coordinates `u ∈ [−1/2, 1/2]^d`
    /// and rescales by the cell volume.
    fn cell_integral(&self, f: impl FnMut(&[f64]) -> f64) -> f64 {
        let d = self.params.d;
        let lo = vec![-0.5; d];
        let hi = vec![0.5; d];
        quadrature::adaptive_box(&lo, &hi, SPATIAL_QUAD_TOL, f) * self.params.h_n.powi(d as i32)
    }

    fn local_bump(&self, u: &[f64]) -> f64 {
        u.iter().map(|&t| self.kernel(t)).product()
    }

    /// `∫ g_w` by per-cell quadrature.
    pub fn mass(&self, j: usize) -> f64 {
        let p = &self.params;
        let on = self.code.weight(j) as f64;
        let cells = self.code.h as f64;
        let bump_cell = self.cell_integral(|u| 1.0 + p.h_n.powf(p.alpha) * self.local_bump(u));
        let flat_cell = p.h_n.powi(p.d as i32);
        (on * bump_cell + (cells - on) * flat_cell) / (1.0 + self.c_w[j])
    }

    /// Minimum of `g_w` over a tensor grid with `points` nodes per axis.
    pub fn grid_min(&self, j: usize, points: usize) -> Result<f64> {
        let d = self.params.d;
        let total = points.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut min = f64::INFINITY;
        for flat in 0..total {
            let mut rest = flat;
            for c in x.iter_mut().rev() {
                *c = ((rest % points) as f64 + 0.5) / points as f64;
                rest /= points;
            }
            min = min.min(self.density(j, &x)?);
        }
        Ok(min)
    }

    /// `a^d h^α`, the proof's bound on every `c_w`.
    pub fn c_w_bound(&self) -> f64 {
        let p = &self.params;
        p.a.powi(p.d as i32) * p.h_n.powf(p.alpha)
    }

    pub fn c_max(&self) -> f64 {
        self.c_w.iter().cloned().fold(0.0, f64::max)
    }

    /// Exact best-sign separation and its certificate for words `j`, `k`.
    pub fn separation(&self, j: usize, k: usize) -> SpatialSeparation {
        let p = &self.params;
        let ha = p.h_n.powf(p.alpha);
        let (aj, ak) = (1.0 / (1.0 + self.c_w[j]), 1.0 / (1.0 + self.c_w[k]));
        let phi1 = self.cell_integral(|u| self.local_bump(u));
        let phi2 = self.cell_integral(|u| self.local_bump(u).powi(2));
        let mut sum = 0.0;
        let mut rho = 0usize;
        for i in 0..self.code.h {
            let (wj, wk) = (self.code.bit(j, i) as u8 as f64, self.code.bit(k, i) as u8 as f64);
            if wj != wk {
                rho += 1;
            }
            let p_xi = (aj - ak) * phi1 + ha * (wj * aj - wk * ak) * phi2;
            sum += p_xi.abs();
        }
        let hd = p.h_n.powf(p.alpha + p.beta + p.d as f64);
        let gap = self.kernel_energy - self.kernel_mass * self.kernel_mass;
        SpatialSeparation {
            exact: p.h_n.powf(p.beta) * sum,
            lower_cert: hd * rho as f64 * gap / (1.0 + self.c_max()),
            nominal: hd * rho as f64 * self.kernel_energy,
            hamming: rho,
        }
    }

    /// KL divergence to the uniform null and the bound chain
    /// `KL ≤ χ² ≤ 1.01 Σ h^{2α} ∫φ²`, with the closed form of the last term.
    pub fn kl_chain(&self, j: usize) -> KlChain {
        let p = &self.params;
        let ha = p.h_n.powf(p.alpha);
        let a = 1.0 / (1.0 + self.c_w[j]);
        let on = self.code.weight(j) as f64;
        let off = self.code.h as f64 - on;
        let vol = p.h_n.powi(p.d as i32);
        let kl_on = self.cell_integral(|u| {
            let g = a * (1.0 + ha * self.local_bump(u));
            g * g.ln()
        });
        let chi_on = self.cell_integral(|u| {
            let g = a * (1.0 + ha * self.local_bump(u));
            (1.0 - g) * (1.0 - g) / g
        });
        let kl = on * kl_on + off * vol * a * a.ln();
        let chi_square = on * chi_on + off * vol * (1.0 - a) * (1.0 - a) / a;
        let bump_energy = on * ha * ha * self.cell_integral(|u| self.local_bump(u).powi(2));
        let closed_form = on * p.h_n.powf(2.0 * p.alpha + p.d as f64) * self.kernel_energy;
        let holds = kl <= chi_square + 1e-15
            && chi_square <= 1.01 * bump_energy + 1e-15
            && (bump_energy - closed_form).abs() <= 0.05 * closed_form.max(f64::MIN_POSITIVE);
        KlChain { kl, chi_square, bump_energy, closed_form, holds }
    }

    /// Density values on the cell-centred grid with `points` nodes per axis.
    pub fn grid_table(&self, j: usize, points: usize) -> Result<Vec<f64>> {
        let d = self.params.d;
        let total = points.pow(d as u32);
        let mut x = vec![0.0; d];
        (0..total)
            .map(|flat| {
                let mut rest = flat;
                for c in x.iter_mut().rev() {
                    *c = ((rest % points) as f64 + 0.5) / points as f64;
                    rest /= points;
                }
                self.density(j, &x)
            })
            .collect()
    }

    /// Cell index (zero-based) of flat position `i` in the code.
    pub fn cell(&self, i: usize) -> Vec<usize> {
        self.cell_of(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCertificates {
    pub max_mass_error: f64,
    pub min_grid_value: f64,
    pub c_w_within_bound: bool,
    pub condition_value: f64,
    pub min_separation_ratio: f64,
    pub kl_chain_holds: bool,
}

impl SpatialFamily {
    /// Runs every certificate over all codewords (separations over all pairs).
    pub fn certify(&self, grid_points: usize) -> Result<SpatialCertificates> {
        let n = self.code.words.len();
        let mut max_mass_error = 0.0f64;
        let mut min_grid_value = f64::INFINITY;
        let mut kl_ok = true;
        for j in 0..n {
            max_mass_error = max_mass_error.max((self.mass(j) - 1.0).abs());
            min_grid_value = min_grid_value.min(self.grid_min(j, grid_points)?);
            kl_ok &= self.kl_chain(j).holds;
        }
        let bound = self.c_w_bound();
        let ratio = (0..n)
            .into_par_iter()
            .map(|j| {
                (j + 1..n)
                    .map(|k| {
                        let s = self.separation(j, k);
                        s.exact / s.lower_cert
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        Ok(SpatialCertificates {
            max_mass_error,
            min_grid_value,
            c_w_within_bound: self.c_w.iter().all(|&c| c <= bound),
            condition_value: self.c_max() + bound,
            min_separation_ratio: ratio,
            kl_chain_holds: kl_ok,
        })
    }
}

/// JSON manifest for either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyManifest {
    Frequency { family: FreqFamily, pairs: PairScan, certified_separation: f64 },
    Spatial { family: SpatialFamily, certificates: SpatialCertificates },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_codes() {
        let c = vg_code(16, 1).unwrap();
        assert!(c.words.len() >= 5);
        assert!(c.min_distance >= 2);
        assert!(c.words[0].iter().all(|&w| w == 0));
        assert!(vg_code(7, 1).is_err());
        let c8 = vg_code(8, 3).unwrap();
        assert_eq!(c8.required_distance, 1);
        assert_eq!(c8.verify().unwrap(), c8.min_distance);
    }

    #[test]
    fn code_is_seed_deterministic() {
        assert_eq!(vg_code(40, 9).unwrap(), vg_code(40, 9).unwrap());
    }

    #[test]
    fn verification_catches_tampering() {
        let mut c = vg_code(32, 2).unwrap();
        c.words[2] = c.words[1].clone();
        assert!(c.verify().is_err());
        let mut c = vg_code(32, 2).unwrap();
        c.words[0][0] = 1;
        assert!(c.verify().is_err());
    }

    #[test]
    fn oversize_code_is_rejected() {
        assert!(matches!(vg_code(200, 0), Err(Error::Construction(_))));
    }

    #[test]
    fn fano_examples() {
        let f = fano_bound(4, 1.0, 4f64.ln() / 16.0).unwrap();
        let expect = (2.0 / 3.0) * (1.0 - 0.125 - (1.0 / (8.0 * 4f64.ln())).sqrt());
        assert!((f.probability - expect).abs() < 1e-15);
        assert!((f.probability - 0.383_146_265_202_258_36).abs() < 1e-12);
        assert!(!f.degenerate);
        let g = fano_bound(4, 1.0, 4f64.ln() / 8.0).unwrap();
        assert!(g.degenerate && g.probability == 0.0);
        assert!(fano_bound(1, 1.0, 0.0).is_err());
        let big = fano_bound(1 << 40, 2.0, 0.0).unwrap();
        assert!(big.probability > 0.999_99);
        assert!((big.risk_lower_bound - 2.0 * big.probability).abs() < 1e-15);
    }

    #[test]
    fn kl_single_coordinate() {
        let a = CoefficientField::zeros(1, 3, FieldKind::SignedMeasure);
        let mut b = a.clone();
        b.set(&[2], 0.3).unwrap();
        assert_eq!(kl_gaussian_sequence(&a, &a, 10.0).unwrap(), 0.0);
        assert!((kl_gaussian_sequence(&b, &a, 10.0).unwrap() - 5.0 * 0.09).abs() < 1e-15);
        let c = CoefficientField::zeros(1, 4, FieldKind::SignedMeasure);
        assert!(matches!(kl_gaussian_sequence(&c, &a, 1.0), Err(Error::BandMismatch(4, 3))));
    }

    #[test]
    fn freq_family_scales() {
        let code = vg_code(9, 1).unwrap();
        let fam = freq_hypotheses(8, 1.0, 1.0, 1, 1.0, code).unwrap();
        assert!((fam.c_alpha - 1.0 / (8f64.sqrt() * 65f64.sqrt())).abs() < 1e-15);
        assert_eq!(fam.member(0).coeffs().iter().filter(|&&c| c != 0.0).count(), 0);
        let (m2_a, m2_b) = (freq_scale(2, 1.0, 1, 1.0), freq_scale(2, 1.0, 1, 1.0));
        assert!((m2_a * m2_b - 0.1).abs() < 1e-15);
        assert!(freq_hypotheses(8, 1.0, 1.0, 1, 1.0, vg_code(16, 1).unwrap()).is_err());
    }

    #[test]
    fn proof_cutoff_values() {
        // (64 / ln 2)^{1/3} · n^{1/3} for α = d = L = 1, c = 1/16.
        let expect = |n: f64| ((64.0 / std::f64::consts::LN_2).powf(1.0 / 3.0) * n.powf(1.0 / 3.0)).round() as usize;
        for n in [1e2, 1e3, 1e4, 1e5] {
            assert_eq!(proof_cutoff(n, 1.0, 1, 1.0, 1.0 / 16.0), expect(n));
        }
    }

    #[test]
    fn spatial_null_is_uniform() {
        let code = vg_code(16, 4).unwrap();
        let fam = spatial_bump_family(16, 1.0, 1.0, 1, None, code).unwrap();
        assert_eq!(fam.c_w[0], 0.0);
        for i in 0..50 {
            assert_eq!(fam.density(0, &[i as f64 / 49.0]).unwrap(), 1.0);
        }
        assert!(fam.c_max() + fam.c_w_bound() < SPATIAL_CONDITION);
    }

    #[test]
    fn spatial_rejects_large_amplitude() {
        let code = vg_code(16, 4).unwrap();
        assert!(spatial_bump_family(16, 1.0, 1.0, 1, Some(10.0), code.clone()).is_err());
        assert!(spatial_bump_family(8, 1.0, 1.0, 1, None, code).is_err());
    }
}
