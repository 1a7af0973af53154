//! The ReLU discriminator class `F^{(ℓ)}(V)`: evaluation, Lipschitz
//! certificates, Sobolev enclosure, and entropy-integral bound calculators.
//!
//! `F^{(0)}` holds the coordinates `x_i` and the constants 0 and 1. A unit of
//! layer `i` computes `Σ_j w_j σ(f_j)` with `‖w‖_1 ≤ V`, where every `f_j` is
//! an input, a constant, or a unit of a strictly earlier layer. The network
//! output is the single unit of the last layer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;
use crate::rng;

const L1_SLACK: f64 = 1e-12;

/// A unit input: coordinate, constant, or earlier unit (1-based layer and
/// unit numbers, written `u{layer}.{unit}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Input(usize),
    Zero,
    One,
    Unit { layer: usize, unit: usize },
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input(i) => write!(f, "x{}", i + 1),
            Source::Zero => write!(f, "zero"),
            Source::One => write!(f, "one"),
            Source::Unit { layer, unit } => write!(f, "u{}.{}", layer + 1, unit + 1),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidNetwork(format!("unknown reference {s:?}"));
        match s {
            "zero" => return Ok(Source::Zero),
            "one" => return Ok(Source::One),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix('x') {
            let i: usize = rest.parse().map_err(|_| bad())?;
            return if i >= 1 { Ok(Source::Input(i - 1)) } else { Err(bad()) };
        }
        if let Some(rest) = s.strip_prefix('u') {
            let (l, u) = rest.split_once('.').ok_or_else(bad)?;
            let l: usize = l.parse().map_err(|_| bad())?;
            let u: usize = u.parse().map_err(|_| bad())?;
            if l == 0 || u == 0 {
                return Err(bad());
            }
            return Ok(Source::Unit { layer: l - 1, unit: u - 1 });
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub weights: Vec<(Source, f64)>,
}

impl Unit {
    pub fn l1(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawNetwork {
    dim: usize,
    depth: usize,
    #[serde(rename = "V")]
    v: f64,
    layers: Vec<Vec<BTreeMap<String, f64>>>,
}

/// Validated network in the class `F^{(depth)}(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct ReluNetwork {
    dim: usize,
    v: f64,
    layers: Vec<Vec<Unit>>,
}

impl TryFrom<RawNetwork> for ReluNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        if raw.depth != raw.layers.len() {
            return Err(Error::InvalidNetwork(format!(
                "depth {} but {} layers given",
                raw.depth,
                raw.layers.len()
            )));
        }
        let layers = raw
            .layers
            .into_iter()
            .map(|layer| {
                layer
                    .into_iter()
                    .map(|unit| {
                        let weights = unit
                            .into_iter()
                            .map(|(k, w)| Ok((k.parse::<Source>()?, w)))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(Unit { weights })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ReluNetwork::new(raw.dim, raw.v, layers)
    }
}

impl From<ReluNetwork> for RawNetwork {
    fn from(net: ReluNetwork) -> Self {
        RawNetwork {
            dim: net.dim,
            depth: net.layers.len(),
            v: net.v,
            layers: net
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|u| u.weights.iter().map(|(s, w)| (s.to_string(), *w)).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl ReluNetwork {
    /// Weights are stored sorted by source.
    pub fn new(dim: usize, v: f64, mut layers: Vec<Vec<Unit>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNetwork("input dimension must be at least 1".into()));
        }
        if !(v >= 1.0 && v.is_finite()) {
            return Err(Error::InvalidNetwork(format!("budget V must be finite and >= 1, got {v}")));
        }
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network needs at least one layer".into()));
        }
        if layers.last().map(Vec::len) != Some(1) {
            return Err(Error::InvalidNetwork("last layer must contain exactly one unit".into()));
        }
        for (li, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::InvalidNetwork(format!("layer {} is empty", li + 1)));
            }
            for (ui, unit) in layer.iter().enumerate() {
                for &(src, w) in &unit.weights {
                    if !w.is_finite() {
                        return Err(Error::InvalidNetwork(format!("non-finite weight in u{}.{}", li + 1, ui + 1)));
                    }
                    let ok = match src {
                        Source::Input(i) => i < dim,
                        Source::Zero | Source::One => true,
                        Source::Unit { layer, unit } => layer < li && unit < layers[layer].len(),
                    };
                    if !ok {
                        return Err(Error::InvalidNetwork(format!(
                            "u{}.{} references {src}, which is not an input or an earlier unit",
                            li + 1,
                            ui + 1
                        )));
                    }
                }
                let l1 = unit.l1();
                if l1 > v * (1.0 + L1_SLACK) {
                    return Err(Error::InvalidNetwork(format!(
                        "u{}.{} has weight l1 norm {l1} above V = {v}",
                        li + 1,
                        ui + 1
                    )));
                }
            }
        }
        for unit in layers.iter_mut().flatten() {
            unit.weights.sort_by_key(|&(src, _)| src);
        }
        Ok(Self { dim, v, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn budget(&self) -> f64 {
        self.v
    }

    pub fn layers(&self) -> &[Vec<Unit>] {
        &self.layers
    }
}

#[inline]
fn relu(t: f64) -> f64 {
    t.max(0.0)
}

/// Feed-forward evaluation at `x ∈ [0,1]^d`.
pub fn net_eval(net: &ReluNetwork, x: &[f64]) -> Result<f64> {
    if x.len() != net.dim {
        return Err(Error::DimensionMismatch { expected: net.dim, got: x.len() });
    }
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let vals = layer
            .iter()
            .map(|unit| {
                unit.weights
                    .iter()
                    .map(|&(src, w)| {
                        let f = match src {
                            Source::Input(i) => x[i],
                            Source::Zero => 0.0,
                            Source::One => 1.0,
                            Source::Unit { layer, unit } => outputs[layer][unit],
                        };
                        w * relu(f)
                    })
                    .sum()
            })
            .collect();
        outputs.push(vals);
    }
    Ok(outputs.last().expect("non-empty network")[0])
}

/// ℓ∞-Lipschitz certificates, all valid upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCert {
    /// `V^ℓ`.
    pub coarse: f64,
    /// `Π_k max(1, max_u ‖w_u‖_1)` over layers.
    pub layerwise: f64,
    /// Per-unit propagation `L_u = Σ_j |w_j| L_{f_j}` with `L_{x_i} = 1` and
    /// constants `0`.
    pub tight: f64,
}

pub fn lipschitz_cert(net: &ReluNetwork) -> LipschitzCert {
    let coarse = net.v.powi(net.depth() as i32);
    let layerwise = net
        .layers
        .iter()
        .map(|layer| layer.iter().map(Unit::l1).fold(1.0f64, f64::max))
        .product();
    let mut lips: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let vals = layer
            .iter()
            .map(|unit| {
                unit.weights
                    .iter()
                    .map(|&(src, w)| {
                        let l = match src {
                            Source::Input(_) => 1.0,
                            Source::Zero | Source::One => 0.0,
                            Source::Unit { layer, unit } => lips[layer][unit],
                        };
                        w.abs() * l
                    })
                    .sum()
            })
            .collect();
        lips.push(vals);
    }
    LipschitzCert { coarse, layerwise, tight: lips.last().expect("non-empty network")[0] }
}

/// `√(d+1) V^ℓ`: radius of the `W^{1,2}` ball containing `F^{(ℓ)}(V)`.
pub fn sobolev_enclosure(ell: usize, v: f64, d: usize) -> f64 {
    ((d + 1) as f64).sqrt() * v.powi(ell as i32)
}

/// `½ ε^{-2ℓ} (2V)^{ℓ(ℓ+1)} ln(2d+2)`.
pub fn covering_bound(eps: f64, ell: usize, v: f64, d: usize) -> f64 {
    let l = ell as f64;
    0.5 * eps.powf(-2.0 * l) * (2.0 * v).powf(l * (l + 1.0)) * (2.0 * d as f64 + 2.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DudleyBound {
    /// `2 · inf_δ (4δ + (8√2/√n) ∫_δ^{1/2} sqrt(log N(ε)) dε)`.
    pub bound: f64,
    pub delta_star: f64,
    /// True when `log N` grows at least like `ε^{-2}` near zero, so the
    /// integral from 0 diverges and only `δ > 0` is usable.
    pub diverges_at_zero: bool,
}

const DUDLEY_TOL: f64 = 1e-8;
const DELTA_MIN: f64 = 1e-14;

/// Minimizes the entropy-integral bound over `δ ∈ (0, 1/2)` by golden-section
/// search in `log δ`, with adaptive Gauss–Legendre for the integral.
pub fn dudley_bound(entropy: impl Fn(f64) -> f64 + Sync, n: f64) -> Result<DudleyBound> {
    if !(n >= 1.0) {
        return Err(invalid("sample size must be at least 1"));
    }
    let scale = 8.0 * 2f64.sqrt() / n.sqrt();
    let root = |e: f64| entropy(e).max(0.0).sqrt();
    // ∫_δ^{1/2} g(ε) dε = ∫_{ln δ}^{ln 1/2} g(e^t) e^t dt.
    let objective = |t: f64| {
        let delta = t.exp();
        let g = |s: f64| {
            let e = s.exp();
            root(e) * e
        };
        let crude = quadrature::GaussLegendre::new(15).integrate(t, 0.5f64.ln(), g);
        let integral = quadrature::adaptive(t, 0.5f64.ln(), DUDLEY_TOL * 1e-4 * crude.abs().max(1e-300), g);
        4.0 * delta + scale * integral
    };
    let (mut a, mut b) = (DELTA_MIN.ln(), 0.5f64.ln());
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = objective(d);
        }
    }
    let t = 0.5 * (a + b);
    let mut best = (objective(t), t);
    for cand in [DELTA_MIN.ln(), 0.5f64.ln()] {
        let v = objective(cand);
        if v < best.0 {
            best = (v, cand);
        }
    }
    let (e1, e2) = (1e-9f64, 1e-8f64);
    let (h1, h2) = (entropy(e1), entropy(e2));
    let diverges_at_zero = h1 > 0.0 && h2 > 0.0 && (h1.ln() - h2.ln()) / (e2.ln() - e1.ln()) >= 2.0 - 1e-9;
    Ok(DudleyBound { bound: 2.0 * best.0, delta_star: best.1.exp(), diverges_at_zero })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    /// `L √(d+1) V^ℓ n^{-(α+1)/(2α+2+d)}`, constant set to 1.
    pub smoothed_bound: f64,
    /// `(ln d)^{1/(2ℓ)} (2V)^{(ℓ+1)/2} n^{-1/(2ℓ)}`, constant set to 1.
    pub chaining_bound: f64,
    pub smoothed_exponent: f64,
    pub chaining_exponent: f64,
    /// `d/(2(ℓ−1)) − 1`.
    pub crossover_alpha: f64,
    /// Decided on exponents: the smoothed rate is faster in `n`.
    pub smoothed_faster: bool,
    pub constants_normalized: bool,
}

pub fn rate_comparison(ell: usize, v: f64, d: usize, alpha: f64, radius: f64, n: f64) -> Result<RateComparison> {
    if ell < 2 {
        return Err(invalid(format!("chaining comparison needs depth >= 2, got {ell}")));
    }
    let (l, df) = (ell as f64, d as f64);
    let smoothed_exponent = (alpha + 1.0) / (2.0 * alpha + 2.0 + df);
    let chaining_exponent = 1.0 / (2.0 * l);
    Ok(RateComparison {
        smoothed_bound: radius * sobolev_enclosure(ell, v, d) * n.powf(-smoothed_exponent),
        chaining_bound: df.ln().max(0.0).powf(1.0 / (2.0 * l))
            * (2.0 * v).powf((l + 1.0) / 2.0)
            * n.powf(-chaining_exponent),
        smoothed_exponent,
        chaining_exponent,
        crossover_alpha: df / (2.0 * (l - 1.0)) - 1.0,
        smoothed_faster: smoothed_exponent > chaining_exponent,
        constants_normalized: true,
    })
}

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverCheck {
    /// `α > d/(2(ℓ−1)) − 1`.
    pub alpha_above: bool,
    /// `(α+1)/(2α+2+d) > 1/(2ℓ)`.
    pub exponent_faster: bool,
}

/// Both sides of the crossover equivalence in exact rational arithmetic.
pub fn crossover_check(alpha: Rational, d: i64, ell: i64) -> Result<CrossoverCheck> {
    if ell < 2 || d < 1 {
        return Err(invalid("need depth >= 2 and d >= 1"));
    }
    let one = Rational::from_integer(1);
    let two = Rational::from_integer(2);
    let dr = Rational::from_integer(d);
    let lr = Rational::from_integer(ell);
    let threshold = dr / (two * (lr - one)) - one;
    let denom = two * alpha + two + dr;
    if denom <= Rational::from_integer(0) {
        return Err(invalid("exponent denominator must be positive"));
    }
    Ok(CrossoverCheck {
        alpha_above: alpha > threshold,
        exponent_faster: (alpha + one) / denom > one / (two * lr),
    })
}

/// Random network with `width` units per hidden layer and one output unit.
/// Each unit draws up to `fan_in` sources and an ℓ1 norm uniform in `(0, V]`.
pub fn random_network(dim: usize, depth: usize, width: usize, v: f64, fan_in: usize, seed: u64) -> Result<ReluNetwork> {
    if depth == 0 || width == 0 || fan_in == 0 {
        return Err(invalid("depth, width and fan-in must be positive"));
    }
    let mut rng = rng::stream(seed);
    let mut layers: Vec<Vec<Unit>> = Vec::with_capacity(depth);
    for li in 0..depth {
        let count = if li + 1 == depth { 1 } else { width };
        let mut pool: Vec<Source> = (0..dim).map(Source::Input).collect();
        pool.push(Source::Zero);
        pool.push(Source::One);
        for (pl, layer) in layers.iter().enumerate() {
            pool.extend((0..layer.len()).map(|u| Source::Unit { layer: pl, unit: u }));
        }
        let units = (0..count)
            .map(|_| {
                let k = rng.random_range(1..=fan_in.min(pool.len()));
                let mut picks: Vec<Source> = Vec::with_capacity(k);
                // Prefer the previous layer so depth is exercised.
                if li > 0 {
                    picks.push(Source::Unit { layer: li - 1, unit: rng.random_range(0..layers[li - 1].len()) });
                }
                while picks.len() < k {
                    let s = pool[rng.random_range(0..pool.len())];
                    if !picks.contains(&s) {
                        picks.push(s);
                    }
                }
                let raw: Vec<f64> = picks.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm: f64 = raw.iter().map(|w: &f64| w.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
                let target = v * rng.random_range(0.05..=1.0);
                Unit { weights: picks.into_iter().zip(raw).map(|(s, w)| (s, w * target / norm)).collect() }
            })
            .collect();
        layers.push(units);
    }
    ReluNetwork::new(dim, v, layers)
}
