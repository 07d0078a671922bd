//! One-parameter sweeps over coefficient shapes or the inoculation dose.
//!
//! Each value is run independently (in parallel); failures are recorded per
//! value and never abort the sweep. Results keep the input order.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSet, CoefficientShape};
use crate::dynamics::{
    growth_rate, incubation_time, integrate, linear_regime_window, GrowthFit, IncubationResult,
    IntegratorOptions,
};
use crate::eigen::{principal_eigenpair, EigenOptions};
use crate::error::{ModelError, Result};
use crate::grid::SizeGrid;
use crate::operator::Discretization;
use crate::state::{inoculum_profile, PolymerState};
use crate::steady::{bimodality_report, build_steady_state, detect_modes, SteadyOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Amplitude `A` (a.k.a. `H`) of a bell-shaped τ.
    BellAmplitude,
    /// Slope β₀ of β(x) = β₁ + β₀x.
    FragmentationSlope,
    /// Concentration α of a scaled-bell τ.
    Tightness,
    /// Peak locus `m` of a bell-shaped τ.
    PeakLocus,
    /// Multiplier of the inoculum profile.
    Dose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Dynamics,
    Eigen,
    Steady,
}

impl SweepAxis {
    pub fn default_mode(self) -> SweepMode {
        match self {
            Self::Tightness => SweepMode::Eigen,
            Self::PeakLocus => SweepMode::Steady,
            _ => SweepMode::Dynamics,
        }
    }

    /// Coefficients for one sweep value.
    pub fn apply(self, base: &CoefficientSet, value: f64) -> Result<CoefficientSet> {
        let mut c = base.clone();
        let mismatch = |what: &str| {
            Err(ModelError::Unsupported(format!(
                "axis {self:?} needs {what}"
            )))
        };
        match (self, &mut c.tau, &mut c.beta) {
            (Self::BellAmplitude, CoefficientShape::Bell { amplitude, .. }, _) => *amplitude = value,
            (Self::BellAmplitude, ..) => return mismatch("a bell-shaped tau"),
            (Self::FragmentationSlope, _, CoefficientShape::Affine { c1, .. }) => *c1 = value,
            (Self::FragmentationSlope, ..) => return mismatch("an affine beta"),
            (Self::Tightness, CoefficientShape::ScaledBell { alpha, .. }, _) => *alpha = value,
            (Self::Tightness, ..) => return mismatch("a scaled-bell tau"),
            (Self::PeakLocus, CoefficientShape::Bell { center, .. }, _)
            | (Self::PeakLocus, CoefficientShape::ScaledBell { center, .. }, _) => *center = value,
            (Self::PeakLocus, ..) => return mismatch("a bell-shaped tau"),
            (Self::Dose, ..) => {}
        }
        c.validate()?;
        Ok(c)
    }
}

/// Settings for dynamics-mode items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsPlan {
    pub t_end: f64,
    /// Initial monomer level; V̄ when absent.
    pub v0: Option<f64>,
    /// Inoculum multiplier (overridden by the dose axis).
    pub dose: f64,
    /// Absolute symptomatic threshold; 10³ × inoculation when absent.
    pub threshold: Option<f64>,
    /// Instant of the normalized profile snapshot.
    pub probe_time: f64,
    /// Largest relative V drift accepted in the growth-rate window.
    pub max_drift: f64,
    pub integrator: IntegratorOptions,
}

impl Default for DynamicsPlan {
    fn default() -> Self {
        Self {
            t_end: 200.0,
            v0: None,
            dose: 1.0,
            threshold: None,
            probe_time: 96.0,
            max_drift: 0.05,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub mode: SweepMode,
    pub dynamics: DynamicsPlan,
    pub steady: SteadyOptions,
    pub eigen: EigenOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOutcome {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub conservation_residuals: Vec<f64>,
    /// u/U at the probe time.
    pub probe_profile: Option<Vec<f64>>,
    pub probe_time: f64,
    pub inoculation: f64,
    pub incubation: IncubationResult,
    pub growth: Option<GrowthFit>,
    pub lambda_vbar: f64,
    pub max_relative_residual: f64,
    pub truncation_flux_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenOutcome {
    pub lambda: f64,
    pub growth_rate: f64,
    /// τ_eff = ∫τ𝒰(V̄).
    pub tau_eff: f64,
    pub n_modes: usize,
    pub mode_locations: Vec<f64>,
    pub center_of_mass: f64,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyOutcome {
    pub v_inf: f64,
    pub exists: bool,
    pub rho_inf: Option<f64>,
    pub n_modes: usize,
    pub mode_locations: Vec<f64>,
    pub secondary_mass_fraction: f64,
    pub center_of_mass: f64,
    pub necessary_condition_met: Option<bool>,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepOutcome {
    Dynamics(DynamicsOutcome),
    Eigen(EigenOutcome),
    Steady(SteadyOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepItem {
    pub value: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

fn run_dynamics(disc: &Arc<Discretization>, plan: &SweepPlan, dose: f64) -> Result<DynamicsOutcome> {
    let d = &plan.dynamics;
    let c = disc.coefficients();
    let vbar = c.vbar();
    let lambda_vbar = principal_eigenpair(disc, vbar, &plan.eigen)?.lambda;
    let initial = PolymerState::from_fn(disc.grid_arc().clone(), d.v0.unwrap_or(vbar), |x| {
        dose * inoculum_profile(x)
    })?;
    let inoculation = initial.moment0();
    let mut opts = d.integrator.clone();
    opts.snapshot_times.push(d.probe_time);
    let traj = integrate(disc, &initial, d.t_end, &opts)?;
    let threshold = d.threshold.unwrap_or(1e3 * inoculation);
    let incubation = incubation_time(&traj, threshold, inoculation, lambda_vbar)?;
    let window = linear_regime_window(&traj, vbar, d.max_drift);
    let growth = growth_rate(&traj, window, vbar).ok();
    let probe_profile = traj
        .snapshots
        .iter()
        .find(|s| (s.t - d.probe_time).abs() < 1e-9)
        .map(|s| {
            let total = disc.grid().integrate(&s.u);
            s.u.iter().map(|e| if total > 0.0 { e / total } else { 0.0 }).collect()
        });
    Ok(DynamicsOutcome {
        times: traj.times,
        v: traj.v,
        rho: traj.rho,
        p: traj.p,
        conservation_residuals: traj.conservation_residuals,
        probe_profile,
        probe_time: d.probe_time,
        inoculation,
        incubation,
        growth,
        lambda_vbar,
        max_relative_residual: traj.max_relative_residual,
        truncation_flux_total: traj.truncation_flux_total,
    })
}

fn run_eigen(disc: &Arc<Discretization>, plan: &SweepPlan) -> Result<EigenOutcome> {
    let vbar = disc.coefficients().vbar();
    let sol = principal_eigenpair(disc, vbar, &plan.eigen)?;
    let profile = sol
        .u_vec
        .clone()
        .ok_or_else(|| ModelError::Domain("V̄ = 0 has no eigenvector".into()))?;
    let grid = disc.grid();
    let modes = detect_modes(grid, &profile);
    Ok(EigenOutcome {
        lambda: sol.lambda,
        growth_rate: sol.growth_rate(),
        tau_eff: disc.tau_moment(&profile),
        n_modes: modes.count(),
        mode_locations: modes.locations,
        center_of_mass: grid.inner(grid.centers(), &profile) / grid.integrate(&profile),
        profile,
    })
}

fn run_steady(disc: &Arc<Discretization>, plan: &SweepPlan) -> Result<SteadyOutcome> {
    let ss = build_steady_state(disc, &plan.steady)?;
    let report = bimodality_report(&ss, disc);
    Ok(SteadyOutcome {
        v_inf: ss.v_inf,
        exists: ss.exists,
        rho_inf: ss.rho_inf,
        n_modes: report.n_modes,
        mode_locations: report.mode_locations,
        secondary_mass_fraction: report.secondary_mass_fraction,
        center_of_mass: ss.center_of_mass,
        necessary_condition_met: report.necessary_condition_met,
        profile: ss.profile,
    })
}

fn run_item(base: &CoefficientSet, grid: &Arc<SizeGrid>, plan: &SweepPlan, value: f64) -> Result<SweepOutcome> {
    let coeffs = plan.axis.apply(base, value)?;
    let disc = Arc::new(Discretization::new(&coeffs, grid.clone())?);
    let dose = if plan.axis == SweepAxis::Dose { value } else { plan.dynamics.dose };
    Ok(match plan.mode {
        SweepMode::Dynamics => SweepOutcome::Dynamics(run_dynamics(&disc, plan, dose)?),
        SweepMode::Eigen => SweepOutcome::Eigen(run_eigen(&disc, plan)?),
        SweepMode::Steady => SweepOutcome::Steady(run_steady(&disc, plan)?),
    })
}

pub fn run_sweep(base: &CoefficientSet, grid: &Arc<SizeGrid>, plan: &SweepPlan) -> Vec<SweepItem> {
    plan.values
        .par_iter()
        .map(|&value| SweepItem {
            value,
            outcome: run_item(base, grid, plan, value).map_err(|e| {
                log::warn!("sweep value {value} failed: {e}");
                e.to_string()
            }),
        })
        .collect()
}

/// Sweep value with the largest eigen growth rate, if it is not an endpoint.
pub fn interior_growth_maximizer(items: &[SweepItem]) -> Option<f64> {
    let rates: Vec<(usize, f64)> = items
        .iter()
        .enumerate()
        .filter_map(|(i, it)| match &it.outcome {
            Ok(SweepOutcome::Eigen(e)) => Some((i, e.growth_rate)),
            _ => None,
        })
        .collect();
    let (best, _) = rates.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1))?;
    (best > 0 && best + 1 < items.len()).then(|| items[best].value)
}

/// First sweep value whose profile has at least two modes.
pub fn bimodality_onset(items: &[SweepItem]) -> Option<f64> {
    items.iter().find_map(|it| {
        let n = match &it.outcome {
            Ok(SweepOutcome::Eigen(e)) => e.n_modes,
            Ok(SweepOutcome::Steady(s)) => s.n_modes,
            _ => 0,
        };
        (n >= 2).then_some(it.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_edit_the_right_parameter() {
        let mut c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        c.tau = CoefficientShape::Bell {
            tau0: 0.001,
            amplitude: 0.01,
            center: 2.0,
            sigma: 0.3,
        };
        let h = SweepAxis::BellAmplitude.apply(&c, 0.1).unwrap();
        assert!((h.tau.eval(2.0) - 0.101).abs() < 1e-15);
        let m = SweepAxis::PeakLocus.apply(&c, 3.0).unwrap();
        assert!((m.tau.eval(3.0) - 0.011).abs() < 1e-15);
        let b = SweepAxis::FragmentationSlope.apply(&c, 0.0471).unwrap();
        assert!((b.beta.eval(1.0) - 0.0471).abs() < 1e-15);
        assert!(SweepAxis::Tightness.apply(&c, 0.1).is_err());
        assert_eq!(SweepAxis::Dose.apply(&c, 5.0).unwrap(), c);
    }

    #[test]
    fn one_failure_does_not_stop_the_sweep() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let grid = Arc::new(SizeGrid::uniform(0.0, 16.0, 100).unwrap());
        let plan = SweepPlan {
            axis: SweepAxis::FragmentationSlope,
            values: vec![0.03, -1.0, 0.06],
            mode: SweepMode::Eigen,
            dynamics: DynamicsPlan::default(),
            steady: SteadyOptions::default(),
            eigen: EigenOptions::default(),
        };
        let items = run_sweep(&c, &grid, &plan);
        assert_eq!(items.len(), 3);
        assert!(items[0].outcome.is_ok());
        assert!(items[1].outcome.is_err());
        assert!(items[2].outcome.is_ok());
        assert_eq!(items[2].value, 0.06);
    }
}
