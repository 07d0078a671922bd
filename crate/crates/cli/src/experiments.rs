//! Experiment runners: each turns a validated config into results, tables
//! and diagnostics.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use prion_core::dynamics::{
    growth_rate, incubation_time, integrate, linear_regime_window, stability_experiment,
    StabilityOptions,
};
use prion_core::eigen::{
    closed_form, eigenpair_with_adjoint, eigenvalue_from_moments, hypothesis_constants,
    principal_eigenpair,
};
use prion_core::state::inoculum_profile;
use prion_core::steady::{bimodality_report, build_steady_state, detect_modes, stationary_profile_check};
use prion_core::sweep::{bimodality_onset, interior_growth_maximizer, run_sweep, DynamicsPlan, SweepOutcome, SweepPlan};
use prion_core::{CoefficientSet, CoefficientShape, Discretization, FragOperator, PolymerState};

use crate::config::{EigenConfig, RunConfig, SimulateConfig, SweepConfig};
use crate::output::{Cell, Table};
use crate::record::*;

/// What a runner hands back to the driver.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: Results,
    pub tables: Vec<Table>,
    pub diagnostics: Diagnostics,
    pub status: RunStatus,
}

/// `(τ₀, β₀, μ₀)` when the coefficients are τ ≡ τ₀, β = β₀x, μ ≡ μ₀ on x₀ = 0.
pub fn constant_family(c: &CoefficientSet) -> Option<(f64, f64, f64)> {
    let beta0 = match c.beta {
        CoefficientShape::Affine { c0, c1 } if c0 == 0.0 && c1 > 0.0 => c1,
        _ => return None,
    };
    (c.x0 == 0.0).then_some(())?;
    Some((c.tau.as_constant()?, beta0, c.mu.as_constant()?))
}

/// Nonzero entries of L_V as (row, col, value).
pub fn operator_table(disc: &Arc<Discretization>, v: f64, name: &str) -> Result<Table> {
    let op = FragOperator::assemble(disc.clone(), v)?;
    let n = op.len();
    let a = op.dense();
    let mut t = Table::new(name, &["row", "col", "value"]);
    for i in 0..n {
        for j in 0..n {
            let e = a[i * n + j];
            if e != 0.0 {
                t.push(vec![i.into(), j.into(), e.into()]);
            }
        }
    }
    Ok(t)
}

fn centers_column(disc: &Discretization) -> Vec<f64> {
    disc.grid().centers().to_vec()
}

pub fn run_eigen(cfg: &RunConfig, disc: &Arc<Discretization>, ec: &EigenConfig, dump: bool) -> Result<Outcome> {
    let grid = disc.grid();
    let constant = constant_family(&cfg.model);
    let mu_x0 = cfg.model.mu.eval(cfg.model.x0);
    let mut rows = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut tables = Vec::new();
    let mut eigen = Table::new(
        "eigenvalues",
        &["v", "lambda", "growth_rate", "residual", "tolerance", "iterations", "lambda_adjoint", "closed_form", "truncation_outflow"],
    );
    let x = centers_column(disc);
    let mut profile_cols: Vec<(String, Vec<f64>)> = vec![("x".into(), x)];
    let mut max_residual: f64 = 0.0;
    let mut max_iterations = 0;
    let mut max_outflow: f64 = 0.0;
    for (k, &v) in ec.v.iter().enumerate() {
        let sol = if ec.adjoint && v > 0.0 {
            eigenpair_with_adjoint(disc, v, &ec.options)
        } else {
            principal_eigenpair(disc, v, &ec.options)
        }
        .with_context(|| format!("eigenproblem at V = {v}"))?;
        let closed = constant.map(|(tau0, beta0, mu0)| closed_form::constant_lambda(mu0, tau0, beta0, v));
        let modes = sol.u_vec.as_ref().map(|u| detect_modes(grid, u));
        let com = sol.u_vec.as_ref().map(|u| grid.inner(grid.centers(), u) / grid.integrate(u));
        eigen.push(vec![
            v.into(),
            sol.lambda.into(),
            sol.growth_rate().into(),
            sol.residual.into(),
            sol.tolerance.into(),
            sol.iterations.into(),
            sol.lambda_adjoint.into(),
            closed.into(),
            sol.truncation_outflow.into(),
        ]);
        if let Some(u) = &sol.u_vec {
            profile_cols.push((format!("u_{k}"), u.clone()));
        }
        if let Some(phi) = &sol.phi_vec {
            profile_cols.push((format!("phi_{k}"), phi.clone()));
        }
        if dump {
            tables.push(operator_table(disc, v, &format!("operator_{k}"))?);
        }
        max_residual = max_residual.max(sol.residual);
        max_iterations = max_iterations.max(sol.iterations);
        max_outflow = max_outflow.max(sol.truncation_outflow);
        rows.push(EigenRow {
            v,
            lambda: sol.lambda,
            growth_rate: sol.growth_rate(),
            residual: sol.residual,
            tolerance: sol.tolerance,
            iterations: sol.iterations,
            lambda_adjoint: sol.lambda_adjoint,
            adjoint_residual: sol.adjoint_residual,
            moments: eigenvalue_from_moments(&sol, disc),
            closed_form: closed,
            truncation_outflow: sol.truncation_outflow,
            n_modes: modes.map(|m| m.count()),
            center_of_mass: com,
        });
    }
    let mut sorted: Vec<(f64, f64)> = rows.iter().map(|r| (r.v, r.lambda)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decreasing = sorted.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12 * w[0].1.abs().max(1.0));
    let bounded_by_mu = rows.iter().all(|r| r.lambda <= mu_x0 + 1e-9 * mu_x0.abs().max(1.0));
    if !decreasing {
        diagnostics.warnings.push("Λ(V) is not nonincreasing over the requested levels".into());
    }
    let vbar = cfg.model.vbar();
    let hypotheses = if ec.adjoint && vbar > 0.0 {
        match hypothesis_constants(disc, vbar, &ec.options) {
            Ok(h) => Some(h),
            Err(e) => {
                diagnostics.warnings.push(format!("hypothesis constants at V̄: {e}"));
                None
            }
        }
    } else {
        None
    };
    tables.insert(0, eigen);
    let cols: Vec<(&str, &[f64])> = profile_cols.iter().map(|(h, c)| (h.as_str(), c.as_slice())).collect();
    tables.insert(1, Table::from_columns("eigenvectors", &cols));
    diagnostics.max_residual = Some(max_residual);
    diagnostics.iterations = Some(max_iterations);
    diagnostics.truncation_flux = Some(max_outflow);
    Ok(Outcome {
        results: Results::Eigen(EigenResults {
            rows,
            decreasing,
            bounded_by_mu,
            hypotheses,
        }),
        tables,
        diagnostics,
        status: RunStatus::Ok,
    })
}

pub fn run_steady(cfg: &RunConfig, disc: &Arc<Discretization>, dump: bool) -> Result<Outcome> {
    let opts = cfg.steady.unwrap_or_default();
    let ss = build_steady_state(disc, &opts)?;
    let report = bimodality_report(&ss, disc);
    let mut diagnostics = Diagnostics::default();
    let profile_check = match stationary_profile_check(&ss, disc) {
        Ok(p) => Some(p),
        Err(e) => {
            log::debug!("profile check skipped: {e}");
            None
        }
    };
    if ss.root.non_monotone_warning {
        diagnostics.warnings.push("Λ(V) scan was not monotone; V∞ is the first crossing".into());
    }
    if !ss.exists {
        diagnostics.warnings.push(format!("no infected steady state: V∞ = {} ≥ V̄ = {}", ss.v_inf, ss.vbar));
    }
    let closed = constant_family(&cfg.model).map(|(tau0, beta0, mu0)| {
        let v_inf = closed_form::constant_v_inf(mu0, tau0, beta0);
        ConstantOracle {
            v_inf,
            rho_inf: (cfg.model.lambda / v_inf - cfg.model.gamma) / tau0,
            center_of_mass: mu0 / beta0,
        }
    });
    let x = centers_column(disc);
    let zero = vec![0.0; x.len()];
    let u_inf = ss.u_inf.as_deref().unwrap_or(&zero);
    let mut tables = vec![Table::from_columns(
        "steady_profile",
        &[("x", &x), ("profile", &ss.profile), ("u_inf", u_inf), ("potential", &report.potential)],
    )];
    if dump {
        tables.push(operator_table(disc, ss.v_inf, "operator_v_inf")?);
    }
    let sol_residual = ss.lambda_at_root.abs();
    diagnostics.max_residual = Some(sol_residual);
    diagnostics.iterations = Some(ss.root.bisections);
    Ok(Outcome {
        results: Results::Steady(SteadyResults {
            v_inf: ss.v_inf,
            vbar: ss.vbar,
            exists: ss.exists,
            rho_inf: ss.rho_inf,
            lambda_at_root: ss.lambda_at_root,
            bisections: ss.root.bisections,
            non_monotone_warning: ss.root.non_monotone_warning,
            tau_integral: ss.tau_integral,
            center_of_mass: ss.center_of_mass,
            n_modes: report.n_modes,
            mode_locations: report.mode_locations,
            secondary_mass_fraction: report.secondary_mass_fraction,
            curvature_term: report.curvature_term,
            curvature_threshold: report.curvature_threshold,
            necessary_condition_met: report.necessary_condition_met,
            profile_check,
            closed_form: closed,
        }),
        tables,
        diagnostics,
        status: RunStatus::Ok,
    })
}

pub fn run_simulate(cfg: &RunConfig, disc: &Arc<Discretization>, sc: &SimulateConfig, dump: bool) -> Result<Outcome> {
    let c = &cfg.model;
    let vbar = c.vbar();
    let mut diagnostics = Diagnostics::default();
    let lambda_vbar = principal_eigenpair(disc, vbar, &Default::default())?.lambda;
    let initial = PolymerState::from_fn(disc.grid_arc().clone(), sc.v0.unwrap_or(vbar), |x| sc.dose * inoculum_profile(x))?;
    let inoculation = initial.moment0();
    let traj = integrate(disc, &initial, sc.t_end, &sc.integrator)?;
    let incubation = if inoculation > 0.0 {
        let threshold = sc.threshold.unwrap_or(1e3 * inoculation);
        match incubation_time(&traj, threshold, inoculation, lambda_vbar) {
            Ok(r) => Some(r),
            Err(e) => {
                diagnostics.warnings.push(format!("incubation time: {e}"));
                None
            }
        }
    } else {
        None
    };
    let growth = if vbar > 0.0 {
        growth_rate(&traj, linear_regime_window(&traj, vbar, sc.max_drift), vbar).ok()
    } else {
        None
    };
    if growth.is_none() && inoculation > 0.0 {
        diagnostics.warnings.push("no exponential window inside the linear regime".into());
    }
    let mut tables = vec![Table::from_columns(
        "timeseries",
        &[
            ("t", &traj.times),
            ("v", &traj.v),
            ("rho", &traj.rho),
            ("p", &traj.p),
            ("conservation_residual", &traj.conservation_residuals),
        ],
    )];
    let x = centers_column(disc);
    let mut cols: Vec<(String, Vec<f64>)> = vec![("x".into(), x)];
    for s in &traj.snapshots {
        cols.push((format!("u_t{}", s.t), s.u.clone()));
    }
    let snap_cols: Vec<(&str, &[f64])> = cols.iter().map(|(h, c)| (h.as_str(), c.as_slice())).collect();
    tables.push(Table::from_columns("snapshots", &snap_cols));

    let stability = match &sc.stability {
        Some(st) => {
            let opts = StabilityOptions {
                horizon: st.horizon,
                integrator: prion_core::dynamics::IntegratorOptions {
                    snapshot_times: vec![],
                    sample_interval: 1.0,
                    ..sc.integrator.clone()
                },
                eigen: Default::default(),
            };
            let r = stability_experiment(disc, st.epsilon, &opts)?;
            tables.push(Table::from_columns("stability_norm", &[("t", &r.times), ("norm", &r.norm)]));
            Some(StabilitySummary {
                epsilon: st.epsilon,
                verdict: r.verdict,
                lambda_vbar: r.lambda_vbar,
                expected_stable: r.expected_stable,
                alpha: r.alpha,
                norm_rate: r.norm_rate,
                norm_r_squared: r.norm_r_squared,
                early_growth_rate: r.early_growth_rate,
                norm_initial: r.norm_initial,
                norm_final: r.norm_final,
                max_weighted_mass_ratio: r.max_weighted_mass_ratio,
                final_v: r.final_v,
                final_rho: r.final_rho,
                final_center_of_mass: r.final_center_of_mass,
                hypotheses: r.hypotheses,
            })
        }
        None => None,
    };
    if dump {
        tables.push(operator_table(disc, vbar, "operator_vbar")?);
    }
    diagnostics.max_residual = Some(traj.max_relative_residual);
    diagnostics.truncation_flux = Some(traj.truncation_flux_total);
    diagnostics.iterations = Some(traj.steps as usize);
    let last = traj.times.len() - 1;
    Ok(Outcome {
        results: Results::Simulate(SimulateResults {
            t_end: sc.t_end,
            steps: traj.steps,
            rejected_steps: traj.rejected_steps,
            max_relative_residual: traj.max_relative_residual,
            truncation_flux_total: traj.truncation_flux_total,
            final_v: traj.v[last],
            final_rho: traj.rho[last],
            final_p: traj.p[last],
            inoculation,
            lambda_vbar,
            growth,
            incubation,
            snapshot_times: traj.snapshots.iter().map(|s| s.t).collect(),
            stability,
        }),
        tables,
        diagnostics,
        status: RunStatus::Ok,
    })
}

pub fn sweep_plan(sc: &SweepConfig) -> SweepPlan {
    SweepPlan {
        axis: sc.axis,
        values: sc.values.clone(),
        mode: sc.mode,
        dynamics: DynamicsPlan {
            t_end: sc.t_end,
            v0: sc.v0,
            dose: sc.dose,
            threshold: sc.threshold,
            probe_time: sc.probe_time,
            max_drift: sc.max_drift,
            integrator: sc.integrator.clone(),
        },
        steady: sc.steady,
        eigen: sc.eigen,
    }
}

pub fn run_sweep_experiment(cfg: &RunConfig, sc: &SweepConfig, dump: bool) -> Result<Outcome> {
    let grid = cfg.grid.build(cfg.model.x0)?;
    let plan = sweep_plan(sc);
    let items = run_sweep(&cfg.model, &grid, &plan);
    let x = grid.centers().to_vec();
    let mut summary = Table::new(
        "sweep",
        &[
            "value", "status", "lambda", "growth_rate", "t_incubation", "predicted", "v_inf", "rho_inf",
            "n_modes", "secondary_mass_fraction", "center_of_mass", "error",
        ],
    );
    let mut series = Table::new("sweep_series", &["value", "t", "v", "rho", "p"]);
    let mut profiles: Vec<(String, Vec<f64>)> = vec![("x".into(), x)];
    let mut rows = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut max_residual: f64 = 0.0;
    for (k, it) in items.iter().enumerate() {
        let v = it.value;
        match &it.outcome {
            Ok(SweepOutcome::Dynamics(d)) => {
                summary.push(vec![
                    v.into(),
                    "ok".into(),
                    d.lambda_vbar.into(),
                    d.growth.map(|g| g.rate).into(),
                    d.incubation.t_incubation.into(),
                    d.incubation.predicted.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                ]);
                for i in 0..d.times.len() {
                    series.push(vec![v.into(), d.times[i].into(), d.v[i].into(), d.rho[i].into(), d.p[i].into()]);
                }
                if let Some(p) = &d.probe_profile {
                    profiles.push((format!("item_{k}"), p.clone()));
                }
                max_residual = max_residual.max(d.max_relative_residual);
                rows.push(SweepRow {
                    value: v,
                    result: Some(ItemSummary::Dynamics {
                        inoculation: d.inoculation,
                        incubation: d.incubation,
                        growth: d.growth,
                        lambda_vbar: d.lambda_vbar,
                        max_relative_residual: d.max_relative_residual,
                        truncation_flux_total: d.truncation_flux_total,
                    }),
                    error: None,
                });
            }
            Ok(SweepOutcome::Eigen(e)) => {
                summary.push(vec![
                    v.into(),
                    "ok".into(),
                    e.lambda.into(),
                    e.growth_rate.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    e.n_modes.into(),
                    Cell::Empty,
                    e.center_of_mass.into(),
                    Cell::Empty,
                ]);
                profiles.push((format!("item_{k}"), e.profile.clone()));
                rows.push(SweepRow {
                    value: v,
                    result: Some(ItemSummary::Eigen {
                        lambda: e.lambda,
                        growth_rate: e.growth_rate,
                        tau_eff: e.tau_eff,
                        n_modes: e.n_modes,
                        mode_locations: e.mode_locations.clone(),
                        center_of_mass: e.center_of_mass,
                    }),
                    error: None,
                });
            }
            Ok(SweepOutcome::Steady(s)) => {
                summary.push(vec![
                    v.into(),
                    "ok".into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    s.v_inf.into(),
                    s.rho_inf.into(),
                    s.n_modes.into(),
                    s.secondary_mass_fraction.into(),
                    s.center_of_mass.into(),
                    Cell::Empty,
                ]);
                profiles.push((format!("item_{k}"), s.profile.clone()));
                rows.push(SweepRow {
                    value: v,
                    result: Some(ItemSummary::Steady {
                        v_inf: s.v_inf,
                        exists: s.exists,
                        rho_inf: s.rho_inf,
                        n_modes: s.n_modes,
                        mode_locations: s.mode_locations.clone(),
                        secondary_mass_fraction: s.secondary_mass_fraction,
                        center_of_mass: s.center_of_mass,
                        necessary_condition_met: s.necessary_condition_met,
                    }),
                    error: None,
                });
            }
            Err(msg) => {
                let mut row = vec![v.into(), "failed".into()];
                row.extend(std::iter::repeat_n(Cell::Empty, 9));
                row.push(msg.as_str().into());
                summary.push(row);
                diagnostics.warnings.push(format!("value {v} failed: {msg}"));
                rows.push(SweepRow {
                    value: v,
                    result: None,
                    error: Some(msg.clone()),
                });
            }
        }
    }
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    if failures == rows.len() {
        bail!("every sweep value failed; first error: {}", rows[0].error.as_deref().unwrap_or("?"));
    }
    let mut tables = vec![summary];
    if !series.rows.is_empty() {
        tables.push(series);
    }
    if profiles.len() > 1 {
        let cols: Vec<(&str, &[f64])> = profiles.iter().map(|(h, c)| (h.as_str(), c.as_slice())).collect();
        tables.push(Table::from_columns("sweep_profiles", &cols));
    }
    if dump {
        let disc = Arc::new(Discretization::new(&cfg.model, grid.clone())?);
        tables.push(operator_table(&disc, cfg.model.vbar(), "operator_vbar")?);
    }
    if max_residual > 0.0 {
        diagnostics.max_residual = Some(max_residual);
    }
    Ok(Outcome {
        results: Results::Sweep(SweepResults {
            axis: sc.axis,
            mode: sc.mode,
            rows,
            failures,
            growth_maximizer: interior_growth_maximizer(&items),
            bimodality_onset: bimodality_onset(&items),
        }),
        tables,
        diagnostics,
        status: if failures > 0 { RunStatus::Partial } else { RunStatus::Ok },
    })
}

pub fn run(cfg: &RunConfig, dump: bool, seed: u64) -> Result<Outcome> {
    use crate::config::Experiment::*;
    match cfg.experiment {
        Sweep => run_sweep_experiment(cfg, cfg.sweep.as_ref().ok_or_else(|| anyhow!("missing [sweep]"))?, dump),
        Validate => crate::validate::run_validate(cfg, seed, dump),
        other => {
            let disc = cfg.discretization()?;
            match other {
                Eigen => run_eigen(cfg, &disc, cfg.eigen.as_ref().ok_or_else(|| anyhow!("missing [eigen]"))?, dump),
                Steady => run_steady(cfg, &disc, dump),
                Simulate => run_simulate(cfg, &disc, cfg.simulate.as_ref().ok_or_else(|| anyhow!("missing [simulate]"))?, dump),
                _ => unreachable!(),
            }
        }
    }
}
