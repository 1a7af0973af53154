//! Coefficient-space GAN: projection of an estimate onto a generator
//! ellipsoid under the discriminator's dual norm, and oracle-inequality
//! checks.
//!
//! With generator class `{θ : θ_0 = 1, Σ_{ξ≠0} (1+‖ξ‖²)^{α_G} θ_ξ² ≤ b}` and
//! discriminator ellipsoid `Θ^β(L)`, the minimax problem reduces to a
//! weighted least-squares projection whose KKT solution is
//!
//! ```text
//! θ_ξ(μ) = θ_ξ(ν̂) / (1 + λ (1+‖ξ‖²)^{α_G+β}),   ξ ≠ 0
//! ```
//!
//! with `λ ≥ 0` fixed by the constraint.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{l1_norm_band, sobolev_ipm};
use crate::spectral::{eval_on_grid, CoefficientField, FieldKind, SobolevEllipsoid};

/// Importance-score generator class.
///
/// `fixed_mass = true` counts the pinned `θ_0 = 1` against the radius, so
/// the budget for `ξ ≠ 0` is `L_G² − 1`. Otherwise the radius constrains the
/// `ξ ≠ 0` coefficients alone with budget `L_G²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorClass {
    pub ellipsoid: SobolevEllipsoid,
    pub band: usize,
    pub fixed_mass: bool,
}

impl GeneratorClass {
    pub fn new(alpha_g: f64, radius: f64, band: usize, fixed_mass: bool) -> Result<Self> {
        Ok(Self { ellipsoid: SobolevEllipsoid::new(alpha_g, radius)?, band, fixed_mass })
    }

    /// Weighted-energy budget available to the `ξ ≠ 0` coefficients.
    pub fn budget(&self) -> f64 {
        let l2 = self.ellipsoid.radius * self.ellipsoid.radius;
        if self.fixed_mass {
            l2 - 1.0
        } else {
            l2
        }
    }

    /// `Σ_{ξ≠0} (1+‖ξ‖²)^{α_G} θ_ξ²`.
    pub fn energy(&self, theta: &CoefficientField) -> f64 {
        theta
            .coeffs()
            .iter()
            .zip(theta.sq_norms())
            .skip(1)
            .map(|(c, s)| self.ellipsoid.weight_of_sq_norm(s) * c * c)
            .sum()
    }

    /// Band, mass and constraint check with absolute slack `tol`.
    pub fn contains(&self, theta: &CoefficientField, tol: f64) -> bool {
        theta.band() <= self.band && theta.coeffs()[0] == 1.0 && self.energy(theta) <= self.budget() + tol
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_BISECTION_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSolution {
    pub mu: CoefficientField,
    pub lambda: f64,
    /// `sobolev_ipm(mu, nu_hat).value`.
    pub objective: f64,
    pub iterations: usize,
    /// Smallest density value on the positivity-check grid.
    pub grid_min: f64,
    pub grid_positive: bool,
}

/// Solves `min_{μ ∈ gen} d_{Θ^β(L)}(μ, ν̂)`.
pub fn gan_solve(
    nu_hat: &CoefficientField,
    gen: &GeneratorClass,
    beta: f64,
    radius: f64,
    tol: f64,
) -> Result<GanSolution> {
    if nu_hat.coeffs()[0] != 1.0 {
        return Err(invalid(format!("nu_hat must have theta_0 = 1, got {}", nu_hat.coeffs()[0])));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let budget = gen.budget();
    if budget < 0.0 {
        return Err(Error::Infeasible(format!(
            "generator radius {} cannot hold unit mass",
            gen.ellipsoid.radius
        )));
    }
    let target = nu_hat.resized(gen.band);
    let sq = target.sq_norms();
    let alpha_w: Vec<f64> = sq.iter().map(|&s| gen.ellipsoid.weight_of_sq_norm(s)).collect();
    let damp: Vec<f64> = sq.iter().map(|&s| (1.0 + s as f64).powf(gen.ellipsoid.alpha + beta)).collect();
    let nu = target.coeffs();
    let energy = |lambda: f64| -> f64 {
        (1..nu.len())
            .map(|i| {
                let m = nu[i] / (1.0 + lambda * damp[i]);
                alpha_w[i] * m * m
            })
            .sum()
    };

    let mut iterations = 0usize;
    let lambda = if energy(0.0) <= budget {
        0.0
    } else if budget == 0.0 {
        f64::MAX
    } else {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while energy(hi) > budget {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
            if iterations >= MAX_BISECTION_ITERS || !hi.is_finite() {
                return Err(Error::NonConvergence { iterations, context: "bracketing lambda".into() });
            }
        }
        loop {
            let residual = budget - energy(hi);
            if residual <= tol || hi - lo <= f64::EPSILON * hi {
                break hi;
            }
            iterations += 1;
            if iterations >= MAX_BISECTION_ITERS {
                return Err(Error::NonConvergence { iterations, context: "bisection on lambda".into() });
            }
            let mid = 0.5 * (lo + hi);
            if energy(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    };

    let mut coeffs = vec![0.0; nu.len()];
    coeffs[0] = 1.0;
    if lambda < f64::MAX {
        for i in 1..nu.len() {
            coeffs[i] = nu[i] / (1.0 + lambda * damp[i]);
        }
    }
    let mu = CoefficientField::new(target.dim(), gen.band, FieldKind::Density, coeffs)?;
    let objective = sobolev_ipm(&mu, nu_hat, beta, radius)?.value;
    let grid_min = positivity_grid_min(&mu);
    Ok(GanSolution { mu, lambda, objective, iterations, grid_min, grid_positive: grid_min > 0.0 })
}

fn positivity_grid_min(mu: &CoefficientField) -> f64 {
    let per_axis = ((4096f64).powf(1.0 / mu.dim() as f64).floor() as usize).max(2);
    let nodes: Vec<f64> = (0..per_axis).map(|i| i as f64 / (per_axis - 1) as f64).collect();
    eval_on_grid(mu, &nodes).into_iter().fold(f64::INFINITY, f64::min)
}

/// Slack under which an oracle inequality is still counted as holding.
pub const ORACLE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub lhs: f64,
    pub approx_err: f64,
    pub stat_err: f64,
    pub slack: f64,
    pub holds: bool,
}

impl OracleReport {
    fn new(lhs: f64, approx_err: f64, stat_err: f64) -> Self {
        let slack = approx_err + stat_err - lhs;
        Self { lhs, approx_err, stat_err, slack, holds: slack >= -ORACLE_SLACK }
    }
}

/// `d(μ_n, ν) ≤ min_{μ∈G} d(μ, ν) + 2 d(ν, ν_n)` for one discriminator class.
/// `stat_err` is the full `2 d(ν, ν_n)` term.
pub fn oracle_check_matched(
    mu_n: &CoefficientField,
    nu: &CoefficientField,
    nu_n: &CoefficientField,
    gen: &GeneratorClass,
    beta: f64,
    radius: f64,
) -> Result<OracleReport> {
    let lhs = sobolev_ipm(mu_n, nu, beta, radius)?.value;
    let approx = gan_solve(nu, gen, beta, radius, DEFAULT_TOL)?.objective;
    let stat = 2.0 * sobolev_ipm(nu, nu_n, beta, radius)?.value;
    Ok(OracleReport::new(lhs, approx, stat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchedReport {
    #[serde(flatten)]
    pub report: OracleReport,
    /// `d_{F_D}(ν, ν_n)`.
    pub stat_err_fd: f64,
    /// `d_F(ν_n, ν)`.
    pub stat_err_f: f64,
    /// Discriminator approximation error; zero for nested bands.
    pub disc_approx_err: f64,
    /// `∫ |ν_n|` by quadrature.
    pub nu_n_l1: f64,
}

/// Nested-class check with `F ⊆ F_D` given by bands `f_band ≤ fd_band` of
/// the same ellipsoid:
/// `d_F(μ_n, ν) ≤ min_{μ∈G} d_{F_D}(μ, ν) + d_{F_D}(ν, ν_n) + d_F(ν_n, ν)`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_check_mismatched(
    mu_n: &CoefficientField,
    nu: &CoefficientField,
    nu_n: &CoefficientField,
    gen: &GeneratorClass,
    f_band: usize,
    fd_band: usize,
    beta: f64,
    radius: f64,
) -> Result<MismatchedReport> {
    if fd_band < f_band {
        return Err(invalid(format!(
            "discriminator band {fd_band} must contain the evaluation band {f_band}"
        )));
    }
    let f = |x: &CoefficientField| x.resized(f_band);
    let fd = |x: &CoefficientField| x.resized(fd_band);
    let lhs = sobolev_ipm(&f(mu_n), &f(nu), beta, radius)?.value;
    let approx = gan_solve(&fd(nu), gen, beta, radius, DEFAULT_TOL)?.objective;
    let stat_err_fd = sobolev_ipm(&fd(nu), &fd(nu_n), beta, radius)?.value;
    let stat_err_f = sobolev_ipm(&f(nu_n), &f(nu), beta, radius)?.value;
    let resolution = match nu_n.dim() {
        1 => 4 * (nu_n.band() + 1),
        2 => 2 * (nu_n.band() + 1),
        _ => nu_n.band() + 1,
    };
    let nu_n_l1 = l1_norm_band(nu_n, resolution)?;
    Ok(MismatchedReport {
        report: OracleReport::new(lhs, approx, stat_err_fd + stat_err_f),
        stat_err_fd,
        stat_err_f,
        disc_approx_err: 0.0,
        nu_n_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_solution_is_identity() {
        let mut nu = CoefficientField::uniform(1, 3);
        nu.set(&[1], 0.1).unwrap();
        let gen = GeneratorClass::new(1.0, 1.0, 3, false).unwrap();
        let sol = gan_solve(&nu, &gen, 1.0, 1.0, DEFAULT_TOL).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert_eq!(sol.mu.coeffs(), nu.coeffs());
        assert_eq!(sol.objective, 0.0);
        assert!(sol.grid_positive);
    }

    #[test]
    fn one_dimensional_projection() {
        for (t, fixed) in [(0.9, false), (-0.9, false), (3.0, true)] {
            let mut nu = CoefficientField::uniform(1, 1);
            nu.set(&[1], t).unwrap();
            let (alpha_g, lg) = (1.0, if fixed { 1.5 } else { 0.5 });
            let gen = GeneratorClass::new(alpha_g, lg, 1, fixed).unwrap();
            let sol = gan_solve(&nu, &gen, 0.5, 1.0, 1e-12).unwrap();
            let b: f64 = if fixed { lg * lg - 1.0 } else { lg * lg };
            let expect = b.sqrt() / 2f64.powf(alpha_g / 2.0) * t.signum();
            assert!((sol.mu.coeffs()[1] - expect).abs() < 1e-10, "{t}");
            assert!(gen.contains(&sol.mu, 1e-12));
        }
    }

    #[test]
    fn infeasible_radius() {
        let gen = GeneratorClass::new(1.0, 0.5, 2, true).unwrap();
        assert!(matches!(
            gan_solve(&CoefficientField::uniform(1, 2), &gen, 1.0, 1.0, 1e-10),
            Err(Error::Infeasible(_))
        ));
        let gen = GeneratorClass::new(1.0, 1.0, 2, true).unwrap();
        let mut nu = CoefficientField::uniform(1, 2);
        nu.set(&[2], 0.3).unwrap();
        let sol = gan_solve(&nu, &gen, 1.0, 1.0, 1e-10).unwrap();
        assert_eq!(sol.mu, CoefficientField::uniform(1, 2));
    }

    #[test]
    fn requires_unit_mass() {
        let nu = CoefficientField::zeros(1, 2, FieldKind::SignedMeasure);
        let gen = GeneratorClass::new(1.0, 1.0, 2, false).unwrap();
        assert!(gan_solve(&nu, &gen, 1.0, 1.0, 1e-10).is_err());
        assert!(gan_solve(&CoefficientField::uniform(1, 2), &gen, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn band_mismatch_truncates_target() {
        let mut nu = CoefficientField::uniform(1, 5);
        nu.set(&[4], 0.2).unwrap();
        let gen = GeneratorClass::new(1.0, 1.0, 2, false).unwrap();
        let sol = gan_solve(&nu, &gen, 1.0, 1.0, 1e-10).unwrap();
        assert_eq!(sol.mu.band(), 2);
        assert!((sol.objective - 0.2 / 17f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn matched_identity_case() {
        let mut nu = CoefficientField::uniform(1, 4);
        nu.set(&[1], 0.4).unwrap();
        nu.set(&[3], -0.2).unwrap();
        let gen = GeneratorClass::new(2.0, 0.4, 4, false).unwrap();
        let mu_n = gan_solve(&nu, &gen, 1.0, 1.0, DEFAULT_TOL).unwrap().mu;
        let rep = oracle_check_matched(&mu_n, &nu, &nu, &gen, 1.0, 1.0).unwrap();
        assert_eq!(rep.stat_err, 0.0);
        assert!((rep.lhs - rep.approx_err).abs() < 1e-15);
        assert!(rep.holds);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.starts_with("{\"lhs\":"));
    }

    #[test]
    fn mismatched_rejects_reversed_bands() {
        let nu = CoefficientField::uniform(1, 4);
        let gen = GeneratorClass::new(1.0, 1.0, 4, false).unwrap();
        assert!(oracle_check_mismatched(&nu, &nu, &nu, &gen, 3, 2, 1.0, 1.0).is_err());
        let rep = oracle_check_mismatched(&nu, &nu, &nu, &gen, 2, 3, 1.0, 1.0).unwrap();
        assert!(rep.report.holds);
        assert!((rep.nu_n_l1 - 1.0).abs() < 1e-12);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.starts_with("{\"lhs\":"));
    }
}
