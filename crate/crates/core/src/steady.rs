//! Non-trivial steady state `(V∞, u∞)` and bimodality of its profile.
//!
//! `V∞` is the root of `Λ(V∞) = 0` and `u∞ = ϱ∞ 𝒰(V∞; ·)`, where `ϱ∞` closes the
//! monomer equation. The state exists iff `V∞ < V̄ = λ/γ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientShape;
use crate::eigen::{principal_eigenpair, EigenOptions};
use crate::error::{ModelError, Result};
use crate::grid::SizeGrid;
use crate::operator::Discretization;

/// Root-finding controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyOptions {
    /// Bracket is `[0, v_max_factor · V̄]`.
    pub v_max_factor: f64,
    /// Target |Λ(V∞)|.
    pub root_tol: f64,
    /// Coarse samples used to locate the first sign change.
    pub scan_points: usize,
    pub max_bisections: usize,
    pub eigen: EigenOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            v_max_factor: 10.0,
            root_tol: 1e-8,
            scan_points: 24,
            max_bisections: 200,
            eigen: EigenOptions::default(),
        }
    }
}

/// Result of the search for `Λ(V∞) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VInfRoot {
    pub v_inf: f64,
    pub lambda_at_root: f64,
    /// Bracket that contained the first sign change.
    pub bracket: (f64, f64),
    pub bisections: usize,
    /// The coarse scan was not decreasing; the returned root is the first crossing.
    pub non_monotone_warning: bool,
}

fn lambda_at(disc: &Arc<Discretization>, v: f64, opts: &EigenOptions) -> Result<f64> {
    Ok(principal_eigenpair(disc, v, opts)?.lambda)
}

/// Bisection root of Λ on `[0, v_max_factor · V̄]`.
pub fn find_v_inf(disc: &Arc<Discretization>, opts: &SteadyOptions) -> Result<VInfRoot> {
    let vbar = disc.coefficients().vbar();
    let v_max = opts.v_max_factor * vbar.max(f64::MIN_POSITIVE);
    let points = opts.scan_points.max(2);
    // geometric spacing resolves small V∞ without many samples
    let v_min = v_max * 1e-6;
    let mut samples = vec![(0.0, lambda_at(disc, 0.0, &opts.eigen)?)];
    for k in 0..points {
        let v = v_min * (v_max / v_min).powf(k as f64 / (points - 1) as f64);
        samples.push((v, lambda_at(disc, v, &opts.eigen)?));
    }
    let non_monotone_warning = samples.windows(2).any(|w| w[1].1 > w[0].1 + 1e-10);
    if non_monotone_warning {
        log::warn!("Λ(V) is not decreasing on the coarse scan; returning the first crossing");
    }
    let Some(k) = samples
        .windows(2)
        .position(|w| w[0].1 > 0.0 && w[1].1 <= 0.0)
    else {
        let last = samples.last().unwrap();
        return Err(ModelError::NoSteadyState {
            v_max,
            lambda_at_v_max: last.1,
        });
    };
    let (mut a, mut b) = (samples[k].0, samples[k + 1].0);
    let bracket = (a, b);
    let mut lb = samples[k + 1].1;
    let mut root = (b, lb);
    let mut bisections = 0;
    if lb.abs() > opts.root_tol {
        loop {
            bisections += 1;
            let mid = 0.5 * (a + b);
            let lm = lambda_at(disc, mid, &opts.eigen)?;
            root = (mid, lm);
            if lm.abs() <= opts.root_tol || bisections >= opts.max_bisections || b - a <= 4.0 * f64::EPSILON * b {
                break;
            }
            if lm > 0.0 {
                a = mid;
            } else {
                b = mid;
                lb = lm;
            }
        }
    }
    let _ = lb;
    Ok(VInfRoot {
        v_inf: root.0,
        lambda_at_root: root.1,
        bracket,
        bisections,
        non_monotone_warning,
    })
}

/// The non-trivial stationary solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub v_inf: f64,
    pub lambda_at_root: f64,
    pub vbar: f64,
    /// V∞ < V̄.
    pub exists: bool,
    /// ϱ∞, only when the state exists.
    pub rho_inf: Option<f64>,
    /// ∫τ𝒰(V∞).
    pub tau_integral: f64,
    /// 𝒰(V∞; ·) with unit integral.
    pub profile: Vec<f64>,
    /// ϱ∞ 𝒰(V∞; ·), only when the state exists.
    pub u_inf: Option<Vec<f64>>,
    /// ∫x𝒰 / ∫𝒰.
    pub center_of_mass: f64,
    /// γV∞ and λ, whose ordering is the existence constraint.
    pub gamma_v_inf: f64,
    pub lambda: f64,
    pub root: VInfRoot,
}

pub fn build_steady_state(disc: &Arc<Discretization>, opts: &SteadyOptions) -> Result<SteadyState> {
    let root = find_v_inf(disc, opts)?;
    let v = root.v_inf;
    let sol = principal_eigenpair(disc, v, &opts.eigen)?;
    let profile = sol.u_vec.ok_or_else(|| {
        ModelError::Domain("steady state at V∞ = 0 has no profile".into())
    })?;
    let grid = disc.grid();
    let c = disc.coefficients();
    let vbar = c.vbar();
    let tau_integral = disc.tau_moment(&profile);
    let beta = disc.effective_beta();
    let h = grid.widths();
    let returned: f64 = (0..profile.len())
        .map(|j| 2.0 * disc.kernel().returned_moment(j) * beta[j] * profile[j] * h[j])
        .sum();
    let exists = v < vbar;
    let rho_inf = exists.then(|| (c.lambda / v - c.gamma) / (tau_integral - returned / v));
    let u_inf = rho_inf.map(|r| profile.iter().map(|p| r * p).collect());
    let center_of_mass = grid.inner(grid.centers(), &profile) / grid.integrate(&profile);
    log::info!(
        "V∞ = {v}, V̄ = {vbar}, γV∞ = {}, λ = {}",
        c.gamma * v,
        c.lambda
    );
    Ok(SteadyState {
        v_inf: v,
        lambda_at_root: root.lambda_at_root,
        vbar,
        exists,
        rho_inf,
        tau_integral,
        profile,
        u_inf,
        center_of_mass,
        gamma_v_inf: c.gamma * v,
        lambda: c.lambda,
        root,
    })
}

/// Residuals of the stationary second-order equation
/// `V(τu)'' + (u(μ₀ + β₀x))' + 2β₀u = 0` and its boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCheck {
    /// Interior residual in the h-weighted 1-norm, relative to `2β₀∫u`.
    pub ode_residual: f64,
    /// Inflow boundary value imposed by the scheme (zero).
    pub inflow_value: f64,
    /// u(x₀) extrapolated linearly from the first two outflow faces, relative to max u.
    pub extrapolated_boundary: f64,
    /// V(τu)'(x₀) from a one-sided quadratic through u(x₀) = 0 and the
    /// first two outflow faces.
    pub boundary_flux: f64,
    /// 2β₀∫u.
    pub boundary_flux_target: f64,
    /// |V∫τu − μ₀∫xu| / (μ₀∫xu).
    pub mass_identity_residual: f64,
}

fn linear_beta_slope(shape: &CoefficientShape) -> Option<f64> {
    match *shape {
        CoefficientShape::Affine { c0, c1 } if c0 == 0.0 => Some(c1),
        _ => None,
    }
}

pub fn stationary_profile_check(ss: &SteadyState, disc: &Discretization) -> Result<ProfileCheck> {
    let c = disc.coefficients();
    let (Some(mu0), Some(beta0)) = (c.mu.as_constant(), linear_beta_slope(&c.beta)) else {
        return Err(ModelError::Unsupported(
            "profile check needs constant μ and β(x) = β₀x".into(),
        ));
    };
    if c.x0 != 0.0 {
        return Err(ModelError::Unsupported("profile check needs x0 = 0".into()));
    }
    let u = ss
        .u_inf
        .as_ref()
        .ok_or_else(|| ModelError::Domain("steady state does not exist".into()))?;
    let grid = disc.grid();
    let x = grid.centers();
    let h = grid.widths();
    let tau = &disc.sampled().tau;
    let v = ss.v_inf;
    let n = u.len();
    let tu: Vec<f64> = (0..n).map(|i| tau[i] * u[i]).collect();
    let g: Vec<f64> = (0..n).map(|i| u[i] * (mu0 + beta0 * x[i])).collect();
    let mut residual = 0.0;
    for i in 1..n - 1 {
        let (dl, dr) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let second = 2.0 * (dl * tu[i + 1] - (dl + dr) * tu[i] + dr * tu[i - 1]) / (dl * dr * (dl + dr));
        let first = (g[i + 1] - g[i - 1]) / (dl + dr);
        residual += (v * second + first + 2.0 * beta0 * u[i]).abs() * h[i];
    }
    let mass = grid.integrate(u);
    let umax = u.iter().cloned().fold(0.0, f64::max);
    // upwind cell values approximate the outflow-face values, so the
    // boundary quadratic goes through (x0, 0) and the first two right faces
    let faces = grid.edges();
    let (a, b) = (faces[1] - c.x0, faces[2] - c.x0);
    let slope = (tu[0] * b * b - tu[1] * a * a) / (a * b * (b - a));
    let extrapolated = u[0] - (u[1] - u[0]) / (b - a) * a;
    let first_moment = grid.inner(x, u);
    Ok(ProfileCheck {
        ode_residual: residual / (2.0 * beta0 * mass),
        inflow_value: 0.0,
        extrapolated_boundary: extrapolated / umax,
        boundary_flux: v * slope,
        boundary_flux_target: 2.0 * beta0 * mass,
        mass_identity_residual: (v * disc.tau_moment(u) - mu0 * first_moment).abs() / (mu0 * first_moment),
    })
}

/// Interior maxima of a sampled density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub indices: Vec<usize>,
    pub locations: Vec<f64>,
    pub heights: Vec<f64>,
    /// Mass on the lighter side of the deepest dip between the two
    /// highest modes, as a fraction of the total; 0 for unimodal data.
    pub secondary_mass_fraction: f64,
}

impl ModeSummary {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Modes of `u`: local maxima of the 3-point moving average with
/// prominence at least 1% of `max u`, excluding two cells at each end.
pub fn detect_modes(grid: &SizeGrid, u: &[f64]) -> ModeSummary {
    let n = u.len();
    let empty = ModeSummary {
        indices: vec![],
        locations: vec![],
        heights: vec![],
        secondary_mass_fraction: 0.0,
    };
    if n < 5 {
        return empty;
    }
    let mut s = u.to_vec();
    for i in 1..n - 1 {
        s[i] = (u[i - 1] + u[i] + u[i + 1]) / 3.0;
    }
    let umax = u.iter().cloned().fold(0.0, f64::max);
    if !(umax > 0.0) {
        return empty;
    }
    let threshold = 0.01 * umax;
    let mut peaks = Vec::new();
    let mut i = 2;
    while i + 2 < n {
        // plateau-aware local maximum
        let mut j = i;
        while j + 1 < n - 2 && s[j + 1] == s[i] {
            j += 1;
        }
        if s[i] > s[i - 1] && s[i] > s[j + 1] {
            let p = (i + j) / 2;
            let height = s[p];
            let mut left_min = height;
            let mut k = i;
            while k > 0 && s[k - 1] <= height {
                k -= 1;
                left_min = left_min.min(s[k]);
            }
            let mut right_min = height;
            let mut k = j;
            while k + 1 < n && s[k + 1] <= height {
                k += 1;
                right_min = right_min.min(s[k]);
            }
            if height - left_min.max(right_min) >= threshold {
                peaks.push(p);
            }
        }
        i = j + 1;
    }
    let x = grid.centers();
    let mut secondary_mass_fraction = 0.0;
    if peaks.len() >= 2 {
        let mut by_height = peaks.clone();
        by_height.sort_by(|a, b| s[*b].total_cmp(&s[*a]));
        let (lo, hi) = (by_height[0].min(by_height[1]), by_height[0].max(by_height[1]));
        let dip = (lo..=hi).min_by(|a, b| s[*a].total_cmp(&s[*b])).unwrap();
        let h = grid.widths();
        let left: f64 = (0..dip).map(|k| u[k] * h[k]).sum();
        let total = grid.integrate(u);
        secondary_mass_fraction = left.min(total - left) / total;
    }
    ModeSummary {
        locations: peaks.iter().map(|&p| x[p]).collect(),
        heights: peaks.iter().map(|&p| u[p]).collect(),
        indices: peaks,
        secondary_mass_fraction,
    }
}

/// Shape analysis of the stationary profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalityReport {
    pub n_modes: usize,
    pub mode_locations: Vec<f64>,
    pub secondary_mass_fraction: f64,
    /// A dip between two modes, i.e. an interior convex critical point.
    pub interior_convex_critical_point: bool,
    /// V∞ · inf τ''.
    pub curvature_term: f64,
    /// −3β₀.
    pub curvature_threshold: f64,
    /// V∞ · inf τ'' < −3β₀; `None` when β is not of the form β₀x.
    pub necessary_condition_met: Option<bool>,
    /// ψ(x) = V∞τ(x) + μ₀x + β₀x²/2 at cell centers (μ taken at x₀).
    pub potential: Vec<f64>,
    pub center_of_mass: f64,
}

pub fn bimodality_report(ss: &SteadyState, disc: &Discretization) -> BimodalityReport {
    let grid = disc.grid();
    let c = disc.coefficients();
    let modes = detect_modes(grid, &ss.profile);
    let beta0 = linear_beta_slope(&c.beta);
    let curvature_term = ss.v_inf * c.tau.min_second_derivative();
    let slope = beta0.unwrap_or(0.0);
    let mu0 = c.mu.eval(c.x0);
    let potential = grid
        .centers()
        .iter()
        .map(|&x| ss.v_inf * c.tau.eval(x) + mu0 * x + 0.5 * slope * x * x)
        .collect();
    BimodalityReport {
        n_modes: modes.count(),
        interior_convex_critical_point: modes.count() >= 2,
        mode_locations: modes.locations,
        secondary_mass_fraction: modes.secondary_mass_fraction,
        curvature_term,
        curvature_threshold: -3.0 * slope,
        necessary_condition_met: beta0.map(|b| curvature_term < -3.0 * b),
        potential,
        center_of_mass: ss.center_of_mass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSet;

    fn disc(c: &CoefficientSet, xmax: f64, n: usize) -> Arc<Discretization> {
        let g = Arc::new(SizeGrid::uniform(c.x0, xmax, n).unwrap());
        Arc::new(Discretization::new(c, g).unwrap())
    }

    #[test]
    fn constant_case_root_and_mass() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, c.default_xmax(), 400);
        let ss = build_steady_state(&d, &SteadyOptions::default()).unwrap();
        assert!(ss.lambda_at_root.abs() <= 1e-8);
        assert!((ss.v_inf / (250.0 / 3.0) - 1.0).abs() < 0.01);
        assert!(ss.exists);
        assert!((ss.rho_inf.unwrap() / 24800.0 - 1.0).abs() < 0.02);
        assert!((ss.center_of_mass / (5.0 / 3.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn no_conversion_means_no_root() {
        let mut c = CoefficientSet::constant(2400.0, 4.0, 0.0, 0.03, 0.05);
        c.tau = CoefficientShape::Constant { value: 0.0 };
        let d = disc(&c, 16.0, 100);
        assert!(matches!(
            find_v_inf(&d, &SteadyOptions::default()),
            Err(ModelError::NoSteadyState { .. })
        ));
    }

    #[test]
    fn low_synthesis_has_no_infected_state() {
        let c = CoefficientSet::constant(240.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, c.default_xmax(), 200);
        let ss = build_steady_state(&d, &SteadyOptions::default()).unwrap();
        assert!(!ss.exists);
        assert!(ss.rho_inf.is_none());
        assert!(ss.gamma_v_inf > ss.lambda);
    }

    #[test]
    fn mode_detection() {
        let g = SizeGrid::uniform(0.0, 10.0, 200).unwrap();
        let one = g.sample(|x| x * (-x).exp());
        assert_eq!(detect_modes(&g, &one).count(), 1);
        let two = g.sample(|x| (-(x - 3.0f64).powi(2)).exp() + 0.5 * (-(x - 7.0f64).powi(2)).exp());
        let m = detect_modes(&g, &two);
        assert_eq!(m.count(), 2);
        assert!((m.locations[0] - 3.0).abs() < 0.1 && (m.locations[1] - 7.0).abs() < 0.1);
        assert!((m.secondary_mass_fraction - 1.0 / 3.0).abs() < 0.01);
        // ripples below 1% of the maximum are not modes
        let noisy = g.sample(|x| x * (-x).exp() + 1e-4 * (20.0 * x).sin().abs());
        assert_eq!(detect_modes(&g, &noisy).count(), 1);
        assert_eq!(detect_modes(&g, &vec![0.0; 200]).count(), 0);
    }

    #[test]
    fn profile_check_rejects_other_classes() {
        let mut c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, c.default_xmax(), 200);
        let ss = build_steady_state(&d, &SteadyOptions::default()).unwrap();
        c.mu = CoefficientShape::Affine { c0: 0.05, c1: 0.01 };
        let other = disc(&c, 16.0, 200);
        assert!(matches!(
            stationary_profile_check(&ss, &other),
            Err(ModelError::Unsupported(_))
        ));
    }
}
