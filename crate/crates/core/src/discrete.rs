//! The discrete nucleated-polymerization system with integer polymer sizes
//! `i = n0..=N`:
//!
//! ```text
//! dV/dt  = λ − γV − τVU + 2β Σ_{i<n0} Σ_{j>i} i u_j
//! du_i/dt = −μu_i − β(i−1)u_i − τV(u_i − u_{i−1}) + 2β Σ_{j>i} u_j
//! ```
//!
//! with `u_{n0−1} = 0`. Polymers elongating past `N` leave the system and are
//! booked as truncation flux.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSet, CoefficientShape, Kernel};
use crate::dynamics::{fit_exponential, Trajectory};
use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaselParams {
    pub lambda: f64,
    pub gamma: f64,
    pub tau: f64,
    pub beta: f64,
    pub mu: f64,
    /// Minimal polymer size.
    pub n0: usize,
}

impl MaselParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("lambda", self.lambda, self.lambda >= 0.0),
            ("gamma", self.gamma, self.gamma > 0.0),
            ("tau", self.tau, self.tau >= 0.0),
            ("beta", self.beta, self.beta >= 0.0),
            ("mu", self.mu, self.mu >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("out of range: {value}"),
                });
            }
        }
        if self.n0 == 0 {
            return Err(ModelError::InvalidParameter {
                name: "n0",
                reason: "minimal size must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Default truncation `N = 20 μ/β` (at least `n0 + 10`).
    pub fn default_truncation(&self) -> usize {
        let n = (20.0 * self.mu / self.beta).ceil();
        if n.is_finite() {
            (n as usize).max(self.n0 + 10)
        } else {
            self.n0 + 1000
        }
    }

    /// Continuum coefficients under the one-index-per-size-unit calibration:
    /// τ ≡ τ, β(x) = βx, μ ≡ μ, x₀ = 0.
    pub fn continuum(&self) -> CoefficientSet {
        CoefficientSet {
            lambda: self.lambda,
            gamma: self.gamma,
            x0: 0.0,
            tau: CoefficientShape::Constant { value: self.tau },
            beta: CoefficientShape::Affine { c0: 0.0, c1: self.beta },
            mu: CoefficientShape::Constant { value: self.mu },
            kernel: Kernel::Uniform,
        }
    }

    /// Exponential growth rate of (U, P) at frozen V from the exact moment
    /// closure `U' = −μU + β(P − (2n0−1)U)`, `P' = −μP + τVU`.
    pub fn moment_growth_rate(&self, v: f64) -> f64 {
        let a = self.beta * (2 * self.n0 - 1) as f64;
        let disc = a * a + 4.0 * self.beta * self.tau * v;
        -self.mu + 0.5 * (-a + disc.sqrt())
    }

    /// Long-run mean size μ/β + 2n0 − 1 of the infected steady state.
    pub fn steady_mean_size(&self) -> f64 {
        self.mu / self.beta + (2 * self.n0 - 1) as f64
    }

    /// Monomer level at the infected steady state, μ(μ + β(2n0−1))/(τβ).
    pub fn steady_monomer(&self) -> f64 {
        self.mu * (self.mu + self.beta * (2 * self.n0 - 1) as f64) / (self.tau * self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteState {
    pub t: f64,
    pub v: f64,
    /// `u[k]` is the density of size `n0 + k`.
    pub u: Vec<f64>,
}

/// The truncated discrete system.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    params: MaselParams,
    n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscreteOptions {
    pub fixed_dt: Option<f64>,
    pub cfl: f64,
    /// Δt ≤ monomer_factor / (γ + τU).
    pub monomer_factor: f64,
    pub sample_interval: f64,
    pub min_dt: f64,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        Self {
            fixed_dt: None,
            cfl: 0.9,
            monomer_factor: 0.05,
            sample_interval: 0.5,
            min_dt: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    /// max over steps of |Δ(V+P)/Δt − (λ − γV − μP − outflow)| / (U + V).
    pub max_relative_residual: f64,
    /// max over samples of u_N / max u.
    pub overflow: f64,
    pub truncation_flux_total: f64,
    pub final_state: DiscreteState,
}

struct Rates {
    dv: f64,
    du: Vec<f64>,
    source: f64,
    outflow_mass: f64,
}

impl DiscreteModel {
    pub fn new(params: MaselParams, n_max: usize) -> Result<Self> {
        params.validate()?;
        if n_max <= params.n0 {
            return Err(ModelError::InvalidParameter {
                name: "n_max",
                reason: format!("truncation {n_max} must exceed n0 = {}", params.n0),
            });
        }
        Ok(Self { params, n_max })
    }

    pub fn params(&self) -> &MaselParams {
        &self.params
    }

    /// Number of tracked sizes.
    pub fn len(&self) -> usize {
        self.n_max - self.params.n0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sizes(&self) -> impl Iterator<Item = f64> + '_ {
        (self.params.n0..=self.n_max).map(|i| i as f64)
    }

    pub fn state_from_fn<F: Fn(f64) -> f64>(&self, v: f64, f: F) -> DiscreteState {
        DiscreteState {
            t: 0.0,
            v,
            u: self.sizes().map(f).collect(),
        }
    }

    pub fn moments(&self, u: &[f64]) -> (f64, f64) {
        let n0 = self.params.n0 as f64;
        u.iter()
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (k, &e)| (a + e, b + (n0 + k as f64) * e))
    }

    fn rates(&self, v: f64, u: &[f64]) -> Rates {
        let p = &self.params;
        let n = u.len();
        let n0 = p.n0 as f64;
        let mut du = vec![0.0; n];
        let mut tail = 0.0;
        for k in (0..n).rev() {
            let i = n0 + k as f64;
            let below = if k == 0 { 0.0 } else { u[k - 1] };
            du[k] = -p.mu * u[k] - p.beta * (i - 1.0) * u[k] - p.tau * v * (u[k] - below)
                + 2.0 * p.beta * tail;
            tail += u[k];
        }
        let (total, mass) = self.moments(u);
        // Σ_{i<n0} i = n0(n0 − 1)/2 for every parent of size ≥ n0
        let returned = p.beta * n0 * (n0 - 1.0) * total;
        let outflow_mass = p.tau * v * u[n - 1] * (self.n_max as f64 + 1.0);
        Rates {
            dv: p.lambda - p.gamma * v - p.tau * v * total + returned,
            du,
            source: p.lambda - p.gamma * v - p.mu * mass - outflow_mass,
            outflow_mass,
        }
    }

    fn choose_dt(&self, v: f64, u: &[f64], cfl: f64, monomer_factor: f64) -> f64 {
        let p = &self.params;
        let vmax = v.max(p.lambda / p.gamma) * 1.01;
        let exit = p.mu + p.beta * (self.n_max as f64 - 1.0) + p.tau * vmax;
        let (total, _) = self.moments(u);
        let monomer = p.gamma + p.tau * total;
        (cfl / exit).min(cfl.min(monomer_factor) / monomer)
    }

    /// One Heun step; `None` if a stage would turn negative.
    pub fn step(&self, state: &DiscreteState, dt: f64) -> Result<Option<DiscreteState>> {
        Ok(self.heun(state.v, &state.u, dt)?.map(|(v, u, _, _)| DiscreteState {
            t: state.t + dt,
            v,
            u,
        }))
    }

    #[allow(clippy::type_complexity)]
    fn heun(&self, v: f64, u: &[f64], dt: f64) -> Result<Option<(f64, Vec<f64>, f64, f64)>> {
        let k1 = self.rates(v, u);
        let v1 = v + dt * k1.dv;
        let u1: Vec<f64> = u.iter().zip(&k1.du).map(|(a, b)| a + dt * b).collect();
        if !v1.is_finite() || u1.iter().any(|e| !e.is_finite()) {
            return Err(ModelError::IntegrationFailed {
                t: f64::NAN,
                reason: "non-finite value in discrete step".into(),
            });
        }
        if v1 < 0.0 || u1.iter().any(|&e| e < 0.0) {
            return Ok(None);
        }
        let k2 = self.rates(v1, &u1);
        let v2 = 0.5 * (v + v1 + dt * k2.dv);
        let u2: Vec<f64> = (0..u.len()).map(|i| 0.5 * (u[i] + u1[i] + dt * k2.du[i])).collect();
        if v2 < 0.0 || u2.iter().any(|&e| e < 0.0) {
            return Ok(None);
        }
        let source = 0.5 * (k1.source + k2.source);
        let outflow = 0.5 * (k1.outflow_mass + k2.outflow_mass);
        Ok(Some((v2, u2, source, outflow)))
    }

    /// Integrates to `t_end` with the same sampling rule as the continuum integrator.
    pub fn integrate(&self, initial: &DiscreteState, t_end: f64, opts: &DiscreteOptions) -> Result<DiscreteTrajectory> {
        if initial.u.len() != self.len() {
            return Err(ModelError::Domain(format!(
                "state has {} sizes, model tracks {}",
                initial.u.len(),
                self.len()
            )));
        }
        if !(t_end > initial.t) || !(opts.sample_interval > 0.0) {
            return Err(ModelError::Domain("need t_end > t and a positive sample interval".into()));
        }
        let t0 = initial.t;
        let mut v = initial.v;
        let mut u = initial.u.clone();
        let mut t = t0;
        let (r0, p0) = self.moments(&u);
        let mut traj = DiscreteTrajectory {
            times: vec![t0],
            v: vec![v],
            rho: vec![r0],
            p: vec![p0],
            max_relative_residual: 0.0,
            overflow: 0.0,
            truncation_flux_total: 0.0,
            final_state: initial.clone(),
        };
        let mut sample_index = 1u64;
        while t < t_end {
            let next_sample = t0 + sample_index as f64 * opts.sample_interval;
            let next_event = next_sample.min(t_end);
            let mut dt = opts.fixed_dt.unwrap_or_else(|| self.choose_dt(v, &u, opts.cfl, opts.monomer_factor));
            let mut lands = false;
            if t + dt >= next_event - 1e-12 * next_event.abs().max(1.0) {
                dt = next_event - t;
                lands = true;
            }
            let (v2, u2, source, outflow) = loop {
                match self.heun(v, &u, dt)? {
                    Some(r) => break r,
                    None => {
                        dt *= 0.5;
                        lands = false;
                        if dt < opts.min_dt {
                            return Err(ModelError::IntegrationFailed {
                                t,
                                reason: "discrete step underflow".into(),
                            });
                        }
                    }
                }
            };
            let (_, mass_before) = self.moments(&u);
            let (total, mass_after) = self.moments(&u2);
            let residual = (v2 + mass_after - v - mass_before) / dt - source;
            traj.max_relative_residual = traj.max_relative_residual.max(residual.abs() / (total + v2));
            traj.truncation_flux_total += dt * outflow;
            v = v2;
            u = u2;
            t = if lands { next_event } else { t + dt };
            if lands {
                traj.times.push(t);
                traj.v.push(v);
                traj.rho.push(total);
                traj.p.push(mass_after);
                let umax = u.iter().cloned().fold(0.0, f64::max);
                if umax > 0.0 {
                    traj.overflow = traj.overflow.max(u[u.len() - 1] / umax);
                }
                if next_event == next_sample {
                    sample_index += 1;
                }
            }
        }
        traj.final_state = DiscreteState { t, v, u };
        Ok(traj)
    }
}

/// Discrete-versus-continuum comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    /// sup over shared sample times of |ΔV| / V_continuum.
    pub v_discrepancy: f64,
    pub rho_discrepancy: f64,
    pub p_discrepancy: f64,
    /// Exact bitwise agreement of the V series.
    pub v_identical: bool,
    pub discrete_growth_rate: Option<f64>,
    pub continuum_growth_rate: Option<f64>,
    /// |discrete − continuum| / |continuum|.
    pub growth_rate_discrepancy: Option<f64>,
    pub calibration: String,
}

fn sup_relative(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = y.abs().max(x.abs());
            if scale > 0.0 {
                (x - y).abs() / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Compares two runs sampled on the same times; `fit_window` selects the
/// span used for the exponential growth rates of total polymer.
pub fn compare_continuum(
    params: &MaselParams,
    continuum_coeffs: &CoefficientSet,
    discrete: &DiscreteTrajectory,
    continuum: &Trajectory,
    fit_window: Option<(f64, f64)>,
) -> Result<DiscrepancyReport> {
    let expected = params.continuum();
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
    let beta_ok = matches!(continuum_coeffs.beta, CoefficientShape::Affine { c0, c1 } if c0 == 0.0 && same(c1, params.beta));
    let ok = same(expected.lambda, continuum_coeffs.lambda)
        && same(expected.gamma, continuum_coeffs.gamma)
        && continuum_coeffs.tau.as_constant().is_some_and(|t| same(t, params.tau))
        && continuum_coeffs.mu.as_constant().is_some_and(|m| same(m, params.mu))
        && beta_ok;
    if !ok {
        return Err(ModelError::InvalidParameter {
            name: "calibration",
            reason: "continuum coefficients do not match the discrete parameters".into(),
        });
    }
    if discrete.times.len() != continuum.times.len()
        || discrete
            .times
            .iter()
            .zip(&continuum.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(ModelError::Domain("runs are not sampled on the same times".into()));
    }
    let fit = |times: &[f64], rho: &[f64]| -> Option<f64> {
        let (a, b) = fit_window?;
        let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= a && times[i] <= b).collect();
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| rho[i]).collect();
        fit_exponential(&t, &y).ok().map(|f| f.rate)
    };
    let dg = fit(&discrete.times, &discrete.rho);
    let cg = fit(&continuum.times, &continuum.rho);
    Ok(DiscrepancyReport {
        v_discrepancy: sup_relative(&discrete.v, &continuum.v),
        rho_discrepancy: sup_relative(&discrete.rho, &continuum.rho),
        p_discrepancy: sup_relative(&discrete.p, &continuum.p),
        v_identical: discrete.v == continuum.v,
        discrete_growth_rate: dg,
        continuum_growth_rate: cg,
        growth_rate_discrepancy: match (dg, cg) {
            (Some(d), Some(c)) => Some((d - c).abs() / c.abs()),
            _ => None,
        },
        calibration: format!(
            "one index per size unit; discrete sizes {}.., continuum x0 = {}",
            params.n0, continuum_coeffs.x0
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MaselParams {
        MaselParams {
            lambda: 2400.0,
            gamma: 4.0,
            tau: 0.01,
            beta: 0.001,
            mu: 0.05,
            n0: 1,
        }
    }

    #[test]
    fn empty_polymers_relax_monomers() {
        let m = DiscreteModel::new(params(), 50).unwrap();
        let s = m.state_from_fn(10.0, |_| 0.0);
        let traj = m.integrate(&s, 3.0, &DiscreteOptions::default()).unwrap();
        let v = *traj.v.last().unwrap();
        assert!((v - (600.0 - 590.0 * (-12.0f64).exp())).abs() < 1e-3);
        assert!(traj.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn frozen_polymers_without_rates() {
        let p = MaselParams {
            tau: 0.0,
            beta: 0.0,
            mu: 0.0,
            ..params()
        };
        let m = DiscreteModel::new(p, 20).unwrap();
        let s = m.state_from_fn(100.0, |i| 1.0 / i);
        let traj = m.integrate(&s, 1.0, &DiscreteOptions::default()).unwrap();
        assert_eq!(traj.final_state.u, s.u);
    }

    #[test]
    fn mass_balance_is_exact() {
        for n0 in [1, 3] {
            let p = MaselParams { n0, ..params() };
            let m = DiscreteModel::new(p, 400).unwrap();
            let s = m.state_from_fn(600.0, |i| (-(i - 20.0f64).powi(2) / 50.0).exp());
            let traj = m.integrate(&s, 20.0, &DiscreteOptions::default()).unwrap();
            assert!(traj.max_relative_residual < 1e-10, "{}", traj.max_relative_residual);
        }
    }

    #[test]
    fn closure_constants() {
        let p = params();
        assert!((p.moment_growth_rate(600.0) - 0.026961).abs() < 1e-5);
        assert!((p.steady_mean_size() - 51.0).abs() < 1e-12);
        assert!((p.steady_monomer() - 255.0).abs() < 1e-9);
        assert_eq!(p.default_truncation(), 1000);
    }
}
