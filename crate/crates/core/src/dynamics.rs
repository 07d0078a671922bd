//! Time integration of the full monomer/polymer system.
//!
//! Method of lines with Heun's method (SSP-RK2). The step is bounded by the
//! positivity limit of forward Euler on both the polymer and the monomer
//! equation, and halved whenever a stage would go negative. Because the
//! transport and kernel discretizations conserve the first moment exactly,
//! the per-step balance
//!
//! ```text
//! Δ(V + P)/Δt = λ − γV − Σ x μ u h − (mass leaving through xmax)
//! ```
//!
//! (stage-averaged on the right) holds to rounding error.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eigen::{adjoint_eigenpair, hypothesis_constants_from, EigenOptions, HypothesisConstants};
use crate::error::{ModelError, Result};
use crate::operator::{Discretization, TransportScheme};
use crate::state::{inoculum_profile, PolymerState};

/// Stepping and output controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOptions {
    pub scheme: TransportScheme,
    /// Fraction of the forward-Euler positivity limit used per step.
    pub cfl: f64,
    /// Δt ≤ loss_factor / max(μ + β).
    pub loss_factor: f64,
    /// Δt ≤ monomer_factor / (γ + Σ τ u h), resolving the monomer time scale.
    pub monomer_factor: f64,
    /// Use this step everywhere instead of the adaptive choice.
    pub fixed_dt: Option<f64>,
    /// Spacing of the stored (t, V, U, P) series.
    pub sample_interval: f64,
    /// Instants at which the full profile is stored.
    pub snapshot_times: Vec<f64>,
    pub min_dt: f64,
    pub max_steps: u64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            scheme: TransportScheme::Upwind,
            cfl: 0.9,
            loss_factor: 0.5,
            monomer_factor: 0.05,
            fixed_dt: None,
            sample_interval: 0.5,
            snapshot_times: vec![96.0],
            min_dt: 1e-12,
            max_steps: 100_000_000,
        }
    }
}

/// Stored profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub v: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    /// Total polymer count U(t) = ϱ(t).
    pub rho: Vec<f64>,
    /// Polymerized mass P(t).
    pub p: Vec<f64>,
    /// Largest |balance residual| over the steps since the previous sample.
    pub conservation_residuals: Vec<f64>,
    /// max over steps of |residual| / (Σ u h + V).
    pub max_relative_residual: f64,
    pub snapshots: Vec<Snapshot>,
    /// Polymerized mass lost through xmax.
    pub truncation_flux_total: f64,
    /// Polymer count lost through xmax.
    pub truncation_count_total: f64,
    pub steps: u64,
    pub rejected_steps: u64,
    pub final_state: PolymerState,
}

struct Stage {
    dv: f64,
    du: Vec<f64>,
    /// λ − γV − Σxμuh − outflow moment.
    source: f64,
    outflow: f64,
    outflow_moment: f64,
}

fn evaluate(disc: &Discretization, scheme: TransportScheme, v: f64, u: &[f64]) -> Stage {
    let c = disc.coefficients();
    let mut du = vec![0.0; u.len()];
    let flux = disc.rates(v, u, scheme, &mut du);
    Stage {
        dv: c.lambda - c.gamma * v - flux.consumption + flux.monomer_return,
        du,
        source: c.lambda - c.gamma * v - disc.mu_mass_loss(u) - flux.outflow_moment,
        outflow: flux.outflow,
        outflow_moment: flux.outflow_moment,
    }
}

fn is_admissible(v: f64, u: &[f64]) -> bool {
    v >= 0.0 && u.iter().all(|&e| e >= 0.0)
}

fn has_nan(v: f64, u: &[f64]) -> bool {
    !v.is_finite() || u.iter().any(|e| !e.is_finite())
}

/// Adaptive step from the positivity limits at the current state.
fn choose_dt(disc: &Discretization, opts: &IntegratorOptions, v: f64, u: &[f64]) -> f64 {
    let c = disc.coefficients();
    let vmax = v.max(c.vbar()) * 1.01;
    let cfl = match opts.scheme {
        TransportScheme::Upwind => opts.cfl,
        TransportScheme::Minmod => 0.5 * opts.cfl,
    };
    let mut dt = f64::INFINITY;
    let exit = disc.max_exit_rate(vmax);
    if exit > 0.0 {
        dt = dt.min(cfl / exit);
    }
    let loss = disc.max_loss_rate();
    if loss > 0.0 {
        dt = dt.min(opts.loss_factor / loss);
    }
    let monomer_loss = c.gamma + disc.tau_moment(u);
    if monomer_loss > 0.0 {
        dt = dt.min(cfl.min(opts.monomer_factor) / monomer_loss);
    }
    dt
}

/// Integrates from `initial` to `t_end`.
pub fn integrate(
    disc: &Arc<Discretization>,
    initial: &PolymerState,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_observed(disc, initial, t_end, opts, |_, _, _| {})
}

/// As [`integrate`], calling `observer(t, V, u)` at every stored sample.
pub fn integrate_observed<F: FnMut(f64, f64, &[f64])>(
    disc: &Arc<Discretization>,
    initial: &PolymerState,
    t_end: f64,
    opts: &IntegratorOptions,
    mut observer: F,
) -> Result<Trajectory> {
    if initial.grid().len() != disc.len() || initial.grid().x0() != disc.grid().x0() {
        return Err(ModelError::Domain("initial state lives on a different grid".into()));
    }
    let t0 = initial.t;
    if !(t_end > t0) {
        return Err(ModelError::Domain(format!("t_end = {t_end} must exceed t = {t0}")));
    }
    if !(opts.sample_interval > 0.0) {
        return Err(ModelError::Domain("sample_interval must be positive".into()));
    }
    let grid = disc.grid();
    let x = grid.centers();
    let mut v = initial.v;
    let mut u = initial.u.clone();
    let mut t = t0;

    let mut snapshot_times: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s >= t0 && s <= t_end)
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut next_snapshot = 0;

    let mut traj = Trajectory {
        times: vec![t0],
        v: vec![v],
        rho: vec![grid.integrate(&u)],
        p: vec![grid.inner(x, &u)],
        conservation_residuals: vec![0.0],
        max_relative_residual: 0.0,
        snapshots: Vec::new(),
        truncation_flux_total: 0.0,
        truncation_count_total: 0.0,
        steps: 0,
        rejected_steps: 0,
        final_state: initial.clone(),
    };
    while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t0 {
        traj.snapshots.push(Snapshot { t: t0, v, u: u.clone() });
        next_snapshot += 1;
    }
    observer(t0, v, &u);
    let mut sample_index = 1u64;
    let mut window_residual: f64 = 0.0;

    while t < t_end {
        if traj.steps >= opts.max_steps {
            return Err(ModelError::IntegrationFailed {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let next_sample = t0 + sample_index as f64 * opts.sample_interval;
        let mut next_event = next_sample.min(t_end);
        if let Some(&s) = snapshot_times.get(next_snapshot) {
            next_event = next_event.min(s);
        }
        let mut dt = opts.fixed_dt.unwrap_or_else(|| choose_dt(disc, opts, v, &u));
        let mut lands_on_event = false;
        if t + dt >= next_event - 1e-12 * next_event.abs().max(1.0) {
            dt = next_event - t;
            lands_on_event = true;
        }

        let k1 = evaluate(disc, opts.scheme, v, &u);
        let (v_new, u_new, k2) = loop {
            let v1 = v + dt * k1.dv;
            let u1: Vec<f64> = u.iter().zip(&k1.du).map(|(a, b)| a + dt * b).collect();
            if has_nan(v1, &u1) {
                return Err(ModelError::IntegrationFailed {
                    t,
                    reason: "non-finite value in first stage".into(),
                });
            }
            if is_admissible(v1, &u1) {
                let k2 = evaluate(disc, opts.scheme, v1, &u1);
                let v2 = 0.5 * (v + v1 + dt * k2.dv);
                let u2: Vec<f64> = (0..u.len())
                    .map(|i| 0.5 * (u[i] + u1[i] + dt * k2.du[i]))
                    .collect();
                if has_nan(v2, &u2) {
                    return Err(ModelError::IntegrationFailed {
                        t,
                        reason: "non-finite value in second stage".into(),
                    });
                }
                if is_admissible(v2, &u2) {
                    break (v2, u2, k2);
                }
            }
            traj.rejected_steps += 1;
            dt *= 0.5;
            lands_on_event = false;
            if dt < opts.min_dt {
                return Err(ModelError::IntegrationFailed {
                    t,
                    reason: format!("step fell below {:e} while keeping positivity", opts.min_dt),
                });
            }
        };

        let mass_before = v + grid.inner(x, &u);
        let mass_after = v_new + grid.inner(x, &u_new);
        let expected = 0.5 * (k1.source + k2.source);
        let residual = (mass_after - mass_before) / dt - expected;
        let scale = grid.integrate(&u_new) + v_new;
        if scale > 0.0 {
            traj.max_relative_residual = traj.max_relative_residual.max(residual.abs() / scale);
        }
        window_residual = window_residual.max(residual.abs());
        traj.truncation_flux_total += 0.5 * dt * (k1.outflow_moment + k2.outflow_moment);
        traj.truncation_count_total += 0.5 * dt * (k1.outflow + k2.outflow);

        v = v_new;
        u = u_new;
        t = if lands_on_event { next_event } else { t + dt };
        traj.steps += 1;

        if lands_on_event && next_event == next_sample.min(t_end) {
            traj.times.push(t);
            traj.v.push(v);
            traj.rho.push(grid.integrate(&u));
            traj.p.push(grid.inner(x, &u));
            traj.conservation_residuals.push(window_residual);
            observer(t, v, &u);
            window_residual = 0.0;
            if next_event == next_sample {
                sample_index += 1;
            }
        }
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t {
            traj.snapshots.push(Snapshot { t, v, u: u.clone() });
            next_snapshot += 1;
        }
    }
    traj.final_state = PolymerState::new(initial.grid_arc().clone(), v, u, t)?;
    Ok(traj)
}

/// Least-squares fit of `ln y = intercept + rate · t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<ExponentialFit> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(ModelError::Domain("need at least two samples to fit".into()));
    }
    if let Some(bad) = y.iter().find(|&&e| !(e > 0.0)) {
        return Err(ModelError::Domain(format!("nonpositive value {bad} in fit window")));
    }
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|e| e.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let lm = ly.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(&ly) {
        stt += (a - tm) * (a - tm);
        sty += (a - tm) * (b - lm);
        syy += (b - lm) * (b - lm);
    }
    let rate = sty / stt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Ok(ExponentialFit {
        rate,
        intercept: lm - rate * tm,
        r_squared,
        points: t.len(),
    })
}

/// Fitted exponential rate of ϱ(t) with a linear-regime diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// max |V − V̄| / V̄ over the window.
    pub v_drift: f64,
    pub points: usize,
}

pub fn growth_rate(traj: &Trajectory, window: (f64, f64), vbar: f64) -> Result<GrowthFit> {
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= window.0 && traj.times[i] <= window.1)
        .collect();
    let t: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| traj.rho[i]).collect();
    let fit = fit_exponential(&t, &y)?;
    let v_drift = idx
        .iter()
        .map(|&i| (traj.v[i] - vbar).abs() / vbar)
        .fold(0.0, f64::max);
    Ok(GrowthFit {
        rate: fit.rate,
        r_squared: fit.r_squared,
        window,
        v_drift,
        points: fit.points,
    })
}

/// Fit window inside the linear regime: ends where V first drifts by
/// `max_drift` from V̄ (or at the end of the run) and starts halfway there.
pub fn linear_regime_window(traj: &Trajectory, vbar: f64, max_drift: f64) -> (f64, f64) {
    let t0 = traj.times[0];
    let end = traj
        .times
        .iter()
        .zip(&traj.v)
        .take_while(|(_, v)| (*v - vbar).abs() / vbar < max_drift)
        .last()
        .map(|(t, _)| *t)
        .unwrap_or(t0);
    (t0 + 0.5 * (end - t0), end)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncubationResult {
    /// First crossing of the threshold, `None` if never reached.
    pub t_incubation: Option<f64>,
    pub threshold: f64,
    pub inoculation: f64,
    /// −ln(threshold/inoculation)/Λ(V̄), only when Λ(V̄) < 0.
    pub predicted: Option<f64>,
    pub final_rho: f64,
}

pub fn incubation_time(
    traj: &Trajectory,
    threshold: f64,
    inoculation: f64,
    lambda_vbar: f64,
) -> Result<IncubationResult> {
    if !(inoculation > 0.0 && threshold > inoculation) {
        return Err(ModelError::Domain(format!(
            "need threshold > inoculation > 0, got {threshold} and {inoculation}"
        )));
    }
    let mut crossing = None;
    for i in 1..traj.times.len() {
        let (a, b) = (traj.rho[i - 1], traj.rho[i]);
        if a < threshold && b >= threshold {
            let (ta, tb) = (traj.times[i - 1], traj.times[i]);
            crossing = Some(ta + (threshold - a) / (b - a) * (tb - ta));
            break;
        }
    }
    if traj.rho.first().is_some_and(|&r| r >= threshold) {
        crossing = Some(traj.times[0]);
    }
    Ok(IncubationResult {
        t_incubation: crossing,
        threshold,
        inoculation,
        predicted: (lambda_vbar < 0.0).then(|| -(threshold / inoculation).ln() / lambda_vbar),
        final_rho: *traj.rho.last().unwrap(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    /// The weighted perturbation norm decays exponentially.
    Stable,
    /// ∫uφ̄ grows beyond ten times its initial value.
    Unstable,
    /// Unperturbed start: the state never moves.
    AtRest,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityOptions {
    pub horizon: f64,
    pub integrator: IntegratorOptions,
    pub eigen: EigenOptions,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            horizon: 2000.0,
            integrator: IntegratorOptions {
                sample_interval: 1.0,
                snapshot_times: vec![],
                ..Default::default()
            },
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    /// Λ(V̄); positive means the disease-free state is expected to be stable.
    pub lambda_vbar: f64,
    pub expected_stable: bool,
    /// Weight α on ∫ũφ̄ in the norm α∫ũφ̄ + |Ṽ|.
    pub alpha: f64,
    /// Log-slope of the weighted norm over the second half of the run.
    pub norm_rate: Option<f64>,
    pub norm_r_squared: Option<f64>,
    /// Log-slope of ∫uφ̄ over the first tenth of the run.
    pub early_growth_rate: Option<f64>,
    pub norm_initial: f64,
    pub norm_final: f64,
    pub max_weighted_mass_ratio: f64,
    pub final_v: f64,
    pub final_rho: f64,
    pub final_center_of_mass: Option<f64>,
    pub hypotheses: HypothesisConstants,
    pub times: Vec<f64>,
    pub norm: Vec<f64>,
}

/// Runs from `(V̄, ε·u₀)` with the inoculum shape `u₀` and classifies the outcome.
pub fn stability_experiment(
    disc: &Arc<Discretization>,
    epsilon: f64,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if !(epsilon >= 0.0) {
        return Err(ModelError::Domain(format!("perturbation scale must be >= 0, got {epsilon}")));
    }
    let c = disc.coefficients();
    let vbar = c.vbar();
    let adj = adjoint_eigenpair(disc, vbar, &opts.eigen)?;
    let hypotheses = hypothesis_constants_from(disc, &adj, opts.eigen.trusted_fraction)?;
    let lambda_vbar = adj.lambda;
    let alpha = 2.0 * hypotheses.k2 * vbar / lambda_vbar.abs().max(f64::MIN_POSITIVE);
    let grid = disc.grid_arc().clone();
    let initial = PolymerState::from_fn(grid.clone(), vbar, |x| epsilon * inoculum_profile(x))?;

    // φ̄ beyond the trusted region carries the boundary layer; freeze it there
    let limit = grid.x0() + opts.eigen.trusted_fraction * (grid.xmax() - grid.x0());
    let x = grid.centers();
    let cut = x.iter().take_while(|&&xi| xi <= limit).count().max(1);
    let mut phi = adj.phi.clone();
    for i in cut..phi.len() {
        phi[i] = phi[cut - 1];
    }
    let mut times = Vec::new();
    let mut weighted = Vec::new();
    let mut norm = Vec::new();
    let traj = integrate_observed(disc, &initial, opts.horizon, &opts.integrator, |t, v, u| {
        let w = grid.inner(u, &phi);
        times.push(t);
        weighted.push(w);
        norm.push(alpha * w + (v - vbar).abs());
    })?;
    let norm_initial = norm[0];
    let norm_final = *norm.last().unwrap();
    let w0 = weighted[0];
    let max_weighted_mass_ratio = if w0 > 0.0 {
        weighted.iter().cloned().fold(0.0, f64::max) / w0
    } else {
        0.0
    };

    let half = times.len() / 2;
    let norm_fit = fit_exponential(&times[half..], &norm[half..]).ok();
    let tenth = (times.len() / 10).max(2);
    let early = fit_exponential(&times[..tenth], &weighted[..tenth]).ok();

    let verdict = if norm_initial == 0.0 && norm.iter().all(|&e| e == 0.0) {
        StabilityVerdict::AtRest
    } else if max_weighted_mass_ratio > 10.0 {
        StabilityVerdict::Unstable
    } else if norm_fit.is_some_and(|f| f.rate < 0.0 && f.r_squared > 0.95) {
        if norm_final < 1e-2 * norm_initial {
            StabilityVerdict::Stable
        } else {
            StabilityVerdict::Inconclusive
        }
    } else {
        StabilityVerdict::Inconclusive
    };
    let fs = &traj.final_state;
    Ok(StabilityReport {
        verdict,
        lambda_vbar,
        expected_stable: lambda_vbar > 0.0,
        alpha,
        norm_rate: norm_fit.map(|f| f.rate),
        norm_r_squared: norm_fit.map(|f| f.r_squared),
        early_growth_rate: early.map(|f| f.rate),
        norm_initial,
        norm_final,
        max_weighted_mass_ratio,
        final_v: fs.v,
        final_rho: fs.moment0(),
        final_center_of_mass: fs.mean_size(),
        hypotheses,
        times,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSet;
    use crate::grid::SizeGrid;

    fn disc(c: &CoefficientSet, xmax: f64, n: usize) -> Arc<Discretization> {
        let g = Arc::new(SizeGrid::uniform(c.x0, xmax, n).unwrap());
        Arc::new(Discretization::new(c, g).unwrap())
    }

    #[test]
    fn uninfected_monomer_relaxes_exponentially() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, 16.0, 100);
        let s0 = PolymerState::new(d.grid_arc().clone(), 100.0, vec![0.0; 100], 0.0).unwrap();
        let traj = integrate(&d, &s0, 2.0, &IntegratorOptions::default()).unwrap();
        for (t, v) in traj.times.iter().zip(&traj.v) {
            let exact = 600.0 + (100.0 - 600.0) * (-4.0 * t).exp();
            assert!((v - exact).abs() < 1e-2 * (1.0 + (exact - 600.0).abs()), "{t}: {v} vs {exact}");
        }
        assert!(traj.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn synthetic_exponential_is_fitted_exactly() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 7.0 * (0.1 * t).exp()).collect();
        let f = fit_exponential(&t, &y).unwrap();
        assert!((f.rate - 0.1).abs() < 1e-10);
        assert!(fit_exponential(&t, &vec![0.0; 50]).is_err());
    }

    #[test]
    fn samples_and_snapshots_land_on_plan() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, 16.0, 100);
        let s0 = PolymerState::from_fn(d.grid_arc().clone(), 600.0, inoculum_profile).unwrap();
        let opts = IntegratorOptions {
            sample_interval: 0.25,
            snapshot_times: vec![0.0, 0.6, 1.0],
            ..Default::default()
        };
        let traj = integrate(&d, &s0, 1.0, &opts).unwrap();
        assert_eq!(traj.times.len(), 5);
        assert!((traj.times[4] - 1.0).abs() < 1e-12);
        let st: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(st.len(), 3);
        assert!((st[1] - 0.6).abs() < 1e-12);
        assert!(traj.max_relative_residual < 1e-10);
    }

    #[test]
    fn incubation_interpolates_first_crossing() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let d = disc(&c, 16.0, 20);
        let s0 = PolymerState::new(d.grid_arc().clone(), 1.0, vec![0.0; 20], 0.0).unwrap();
        let mut traj = integrate(&d, &s0, 1.0, &IntegratorOptions::default()).unwrap();
        traj.times = vec![0.0, 1.0, 2.0];
        traj.rho = vec![1.0, 3.0, 9.0];
        let r = incubation_time(&traj, 6.0, 1.0, -0.5).unwrap();
        assert!((r.t_incubation.unwrap() - 1.5).abs() < 1e-12);
        assert!((r.predicted.unwrap() - 6f64.ln() / 0.5).abs() < 1e-12);
        let never = incubation_time(&traj, 100.0, 1.0, 0.1).unwrap();
        assert_eq!(never.t_incubation, None);
        assert_eq!(never.predicted, None);
        assert!(incubation_time(&traj, 0.5, 1.0, -0.5).is_err());
    }
}
