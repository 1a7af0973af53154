//! Gauss–Legendre rules: fixed, composite, and adaptive.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|t| mid + half * t).collect();
        let w = self.weights.iter().map(|w| half * w).collect();
        (x, w)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(mid + half * t))
            .sum();
        half * s
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule on `[a, b]`: `panels` equal sub-intervals with an
/// `order`-point Gauss–Legendre rule on each. Returns flattened nodes and
/// weights in increasing node order.
pub fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let (x, w) = rule.on_interval(lo, lo + h);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

pub fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let (xs, ws) = composite_nodes(a, b, panels, order);
    xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum()
}

const ADAPTIVE_ORDER: usize = 15;
const ADAPTIVE_MAX_DEPTH: usize = 40;

/// Adaptive Gauss–Legendre: a panel is accepted when its single-rule
/// estimate agrees with the two-half estimate to within the local tolerance.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> f64 {
    let rule = GaussLegendre::new(ADAPTIVE_ORDER);
    let whole = rule.integrate(a, b, &mut f);
    adaptive_step(&rule, a, b, whole, tol, 0, &mut f)
}

fn adaptive_step<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    f: &mut F,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, &mut *f);
    let right = rule.integrate(mid, b, &mut *f);
    let refined = left + right;
    // Round-off floor: no panel is refined below relative precision 1e-15.
    if (refined - whole).abs() <= tol.max(1e-15 * refined.abs()) || depth >= ADAPTIVE_MAX_DEPTH {
        return refined;
    }
    adaptive_step(rule, a, mid, left, 0.5 * tol, depth + 1, f)
        + adaptive_step(rule, mid, b, right, 0.5 * tol, depth + 1, f)
}

/// Iterated adaptive integration over the box `∏ [lo_i, hi_i]`.
pub fn adaptive_box<F: FnMut(&[f64]) -> f64>(lo: &[f64], hi: &[f64], tol: f64, mut f: F) -> f64 {
    assert_eq!(lo.len(), hi.len());
    let mut x = lo.to_vec();
    nested(lo, hi, tol, 0, &mut x, &mut f)
}

fn nested<F: FnMut(&[f64]) -> f64>(
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    axis: usize,
    x: &mut Vec<f64>,
    f: &mut F,
) -> f64 {
    if axis == lo.len() {
        return f(x);
    }
    let inner_tol = tol / (hi[axis] - lo[axis]).max(1e-300);
    adaptive(lo[axis], hi[axis], tol, |t| {
        x[axis] = t;
        nested(lo, hi, inner_tol, axis + 1, x, f)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // Degree 15 is the exactness limit of an 8-point rule.
        let v = rule.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes[2], 0.0);
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_bump() {
        let v = adaptive(-1.0, 1.0, 1e-12, |t| {
            if t.abs() < 1.0 {
                (-1.0 / (1.0 - t * t)).exp()
            } else {
                0.0
            }
        });
        assert!((v - 0.443_993_816_168_079_4).abs() < 1e-10, "{v}");
    }

    #[test]
    fn adaptive_box_product() {
        let v = adaptive_box(&[0.0, 0.0], &[1.0, 2.0], 1e-10, |x| x[0] * x[1]);
        assert!((v - 1.0).abs() < 1e-10);
    }
}
