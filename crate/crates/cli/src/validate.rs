//! Built-in oracle suite behind `prion validate`.

use std::sync::Arc;

use anyhow::Result;
use prion_core::discrete::{compare_continuum, DiscreteModel, DiscreteOptions};
use prion_core::dynamics::{integrate, linear_regime_window, IntegratorOptions};
use prion_core::eigen::{adjoint_eigenpair, closed_form, principal_eigenpair, EigenOptions};
use prion_core::kernel::KernelWeights;
use prion_core::state::inoculum_profile;
use prion_core::steady::{build_steady_state, SteadyOptions};
use prion_core::{CoefficientSet, Discretization, FragOperator, PolymerState, SizeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{default_model, DiscreteConfig, RunConfig};
use crate::experiments::{constant_family, operator_table, Outcome};
use crate::output::Table;
use crate::record::{CheckResult, Diagnostics, Results, RunStatus, ValidateResults};

fn check(name: &str, value: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: value.is_finite() && value <= tolerance,
        value,
        tolerance,
        detail,
    }
}

fn failed(name: &str, err: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: false,
        value: f64::NAN,
        tolerance: 0.0,
        detail: err.to_string(),
    }
}

fn disc(c: &CoefficientSet, xmax: f64, n: usize) -> prion_core::Result<Arc<Discretization>> {
    let g = Arc::new(SizeGrid::uniform(c.x0, xmax, n)?);
    Ok(Arc::new(Discretization::new(c, g)?))
}

/// Both moment laws of the fragment table, column by column.
pub fn kernel_moments(d: &Discretization) -> CheckResult {
    let grid = d.grid();
    let w = KernelWeights::new(d.coefficients().kernel, grid);
    let x = grid.centers();
    let kernel = d.coefficients().kernel;
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        if !w.is_active(j) {
            continue;
        }
        let y = x[j];
        let number: f64 = (0..j).map(|i| w.weight(i, j)).sum();
        let moment: f64 = (0..j).map(|i| x[i] * w.weight(i, j)).sum();
        let target = kernel.number_integral(grid.x0(), y, y);
        worst = worst.max((number - target).abs() / target.abs().max(1e-300));
        worst = worst.max((moment + w.returned_moment(j) - 0.5 * y).abs() / (0.5 * y));
    }
    check("kernel_moments", worst, 1e-12, "max relative error of Σ W and Σ xW + returned = y/2".into())
}

/// ⟨L u, φ⟩ = ⟨u, L* φ⟩ on random positive vectors.
pub fn duality(d: &Arc<Discretization>, v: f64, samples: usize, seed: u64) -> CheckResult {
    let op = match FragOperator::assemble(d.clone(), v) {
        Ok(op) => op,
        Err(e) => return failed("duality", e),
    };
    let adj = op.adjoint();
    let grid = d.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u: Vec<f64> = (0..op.len()).map(|_| rng.random::<f64>()).collect();
        let phi: Vec<f64> = (0..op.len()).map(|_| rng.random::<f64>()).collect();
        let lu = op.apply(&u);
        let lphi = adj.apply(&phi);
        let lhs = grid.inner(&lu, &phi);
        let rhs = grid.inner(&u, &lphi);
        let sup_phi = phi.iter().cloned().fold(0.0, f64::max);
        let l1_u: f64 = u.iter().zip(grid.widths()).map(|(e, h)| e.abs() * h).sum();
        worst = worst.max((lhs - rhs).abs() / (sup_phi * l1_u));
    }
    check("duality", worst, 1e-10, format!("|⟨φ, Lu⟩ − ⟨L*φ, u⟩| / (‖φ‖∞‖u‖₁), {samples} pairs at V = {v}, seed {seed}"))
}

/// Λ(V) = μ₀ − √(τ₀β₀V) for the constant reference model.
pub fn closed_form_eigen(n: usize) -> CheckResult {
    let c = default_model();
    let (tau0, beta0, mu0) = constant_family(&c).expect("reference model is constant");
    let d = match disc(&c, c.default_xmax(), n) {
        Ok(d) => d,
        Err(e) => return failed("closed_form_eigen", e),
    };
    let mut worst: f64 = 0.0;
    for v in [10.0, 100.0, 600.0] {
        match principal_eigenpair(&d, v, &EigenOptions::default()) {
            Ok(sol) => {
                let exact = closed_form::constant_lambda(mu0, tau0, beta0, v);
                worst = worst.max((sol.lambda - exact).abs() / exact.abs());
            }
            Err(e) => return failed("closed_form_eigen", e),
        }
    }
    check("closed_form_eigen", worst, 1e-2, format!("relative error at V = 10, 100, 600 with n = {n}"))
}

/// V∞, ϱ∞ and center of mass of the constant reference model.
pub fn closed_form_steady(n: usize) -> CheckResult {
    let c = default_model();
    let (tau0, beta0, mu0) = constant_family(&c).expect("reference model is constant");
    let d = match disc(&c, c.default_xmax(), n) {
        Ok(d) => d,
        Err(e) => return failed("closed_form_steady", e),
    };
    let ss = match build_steady_state(&d, &SteadyOptions::default()) {
        Ok(ss) => ss,
        Err(e) => return failed("closed_form_steady", e),
    };
    let v_inf = closed_form::constant_v_inf(mu0, tau0, beta0);
    let rho_inf = (c.lambda / v_inf - c.gamma) / tau0;
    let com = mu0 / beta0;
    // each error scaled by its own tolerance: 1%, 2%, 1%
    let errs = [
        (ss.v_inf - v_inf).abs() / v_inf,
        ss.rho_inf.map_or(f64::INFINITY, |r| (r - rho_inf).abs() / rho_inf),
        (ss.center_of_mass - com).abs() / com,
    ];
    let worst = (errs[0] / 0.01).max(errs[1] / 0.02).max(errs[2] / 0.01);
    check(
        "closed_form_steady",
        worst,
        1.0,
        format!("relative errors V∞ {:.2e}, ϱ∞ {:.2e}, center {:.2e}", errs[0], errs[1], errs[2]),
    )
}

/// φ(x) = 1 + x/√(τ₀V/β₀) for the constant reference model.
pub fn adjoint_profile(n: usize) -> CheckResult {
    let c = default_model();
    let (tau0, beta0, _) = constant_family(&c).expect("reference model is constant");
    let v = c.vbar();
    let xmax = 30.0;
    let d = match disc(&c, xmax, n) {
        Ok(d) => d,
        Err(e) => return failed("adjoint_profile", e),
    };
    let opts = EigenOptions::default();
    let adj = match adjoint_eigenpair(&d, v, &opts) {
        Ok(a) => a,
        Err(e) => return failed("adjoint_profile", e),
    };
    let len = closed_form::adjoint_length(tau0, beta0, v);
    let limit = opts.trusted_fraction * xmax;
    let worst = d
        .grid()
        .centers()
        .iter()
        .zip(&adj.phi)
        .filter(|(x, _)| **x <= limit)
        .map(|(x, p)| {
            let exact = 1.0 + x / len;
            (p - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    check("adjoint_profile", worst, 2e-2, format!("sup relative error on [0, {limit}] at V = {v}"))
}

/// Mass balance and positivity over a short run of the configured model.
pub fn conservation_and_positivity(d: &Arc<Discretization>) -> Vec<CheckResult> {
    let c = d.coefficients();
    let initial = match PolymerState::from_fn(d.grid_arc().clone(), c.vbar(), inoculum_profile) {
        Ok(s) => s,
        Err(e) => return vec![failed("conservation", &e), failed("positivity", e)],
    };
    let opts = IntegratorOptions {
        snapshot_times: vec![],
        ..Default::default()
    };
    let traj = match integrate(d, &initial, 20.0, &opts) {
        Ok(t) => t,
        Err(e) => return vec![failed("conservation", &e), failed("positivity", e)],
    };
    let min_u = traj.final_state.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_v = traj.v.iter().cloned().fold(f64::INFINITY, f64::min);
    let negative = (-min_u.min(min_v)).max(0.0);
    vec![
        check(
            "conservation",
            traj.max_relative_residual,
            1e-8,
            format!("max relative mass-balance residual over 20 days, {} steps", traj.steps),
        ),
        check("positivity", negative, 0.0, format!("min u {min_u:.3e}, min V {min_v:.3e}")),
    ]
}

/// Discrete model against its continuum calibration.
pub fn discrete_comparison(dc: &DiscreteConfig) -> Result<(Vec<CheckResult>, prion_core::discrete::DiscrepancyReport)> {
    let p = dc.params;
    let model = DiscreteModel::new(p, dc.n_max)?;
    let vbar = p.lambda / p.gamma;
    let discrete = model.integrate(&model.state_from_fn(vbar, inoculum_profile), dc.t_end, &DiscreteOptions::default())?;
    let coeffs = p.continuum();
    let d = disc(&coeffs, dc.xmax, dc.n)?;
    let initial = PolymerState::from_fn(d.grid_arc().clone(), vbar, inoculum_profile)?;
    let continuum = integrate(
        &d,
        &initial,
        dc.t_end,
        &IntegratorOptions {
            snapshot_times: vec![],
            ..Default::default()
        },
    )?;
    let window = linear_regime_window(&continuum, vbar, 0.05);
    let report = compare_continuum(&p, &coeffs, &discrete, &continuum, Some(window))?;
    let n = dc.n_max as f64;
    let checks = vec![
        check(
            "discrete_growth_rate",
            report.growth_rate_discrepancy.unwrap_or(f64::INFINITY),
            0.05,
            format!("discrete {:?} vs continuum {:?}", report.discrete_growth_rate, report.continuum_growth_rate),
        ),
        check("discrete_overflow", discrete.overflow, 5.0 / (n * n), format!("u_N / max u with N = {}", dc.n_max)),
        check("discrete_conservation", discrete.max_relative_residual, 1e-8, "max relative mass-balance residual".into()),
    ];
    Ok((checks, report))
}

pub fn run_validate(cfg: &RunConfig, seed: u64, dump: bool) -> Result<Outcome> {
    let vc = cfg.validate.clone().unwrap_or(crate::config::ValidateConfig {
        duality_samples: 100,
        discrete: None,
    });
    let d = cfg.discretization()?;
    let n = cfg.grid.n;
    let mut checks = vec![
        kernel_moments(&d),
        duality(&d, cfg.model.vbar(), vc.duality_samples, seed),
        closed_form_eigen(n),
        closed_form_steady(n),
        adjoint_profile(n.min(400)),
    ];
    checks.extend(conservation_and_positivity(&d));
    let mut diagnostics = Diagnostics::default();
    let discrete = match &vc.discrete {
        Some(dc) => match discrete_comparison(dc) {
            Ok((c, report)) => {
                checks.extend(c);
                Some(report)
            }
            Err(e) => {
                checks.push(failed("discrete_growth_rate", e));
                None
            }
        },
        None => None,
    };
    let mut table = Table::new("checks", &["name", "passed", "value", "tolerance", "detail"]);
    for c in &checks {
        table.push(vec![
            c.name.as_str().into(),
            if c.passed { "true" } else { "false" }.into(),
            c.value.into(),
            c.tolerance.into(),
            c.detail.as_str().into(),
        ]);
        if !c.passed {
            diagnostics.warnings.push(format!("check {} failed: {}", c.name, c.detail));
        }
    }
    let mut tables = vec![table];
    if dump {
        tables.push(operator_table(&d, cfg.model.vbar(), "operator_vbar")?);
    }
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(Outcome {
        results: Results::Validate(ValidateResults {
            checks,
            all_passed,
            discrete,
        }),
        tables,
        diagnostics,
        status: if all_passed { RunStatus::Ok } else { RunStatus::Partial },
    })
}

