use std::sync::Arc;

use prion_core::dynamics::{
    growth_rate, incubation_time, integrate, linear_regime_window, stability_experiment,
    IntegratorOptions, StabilityOptions, StabilityVerdict,
};
use prion_core::eigen::{principal_eigenpair, scan_lambda, EigenOptions};
use prion_core::state::inoculum_profile;
use prion_core::{
    CoefficientSet, CoefficientShape, Discretization, PolymerState, SizeGrid, TransportScheme,
};
use proptest::prelude::*;

fn section5(amplitude: f64) -> CoefficientSet {
    let mut c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
    c.tau = CoefficientShape::Bell {
        tau0: 0.001,
        amplitude,
        center: 2.0,
        sigma: 0.1f64.sqrt(),
    };
    c
}

fn disc(c: &CoefficientSet, xmax: f64, n: usize) -> Arc<Discretization> {
    let g = Arc::new(SizeGrid::uniform(c.x0, xmax, n).unwrap());
    Arc::new(Discretization::new(c, g).unwrap())
}

fn inoculated(d: &Arc<Discretization>, v: f64, dose: f64) -> PolymerState {
    PolymerState::from_fn(d.grid_arc().clone(), v, |x| dose * inoculum_profile(x)).unwrap()
}

#[test]
fn mass_balance_holds_step_by_step() {
    let c = section5(0.01);
    let d = disc(&c, c.default_xmax(), 400);
    let traj = integrate(&d, &inoculated(&d, 600.0, 1.0), 200.0, &IntegratorOptions::default()).unwrap();
    assert!(traj.max_relative_residual <= 1e-8, "{}", traj.max_relative_residual);
    assert!(traj.truncation_flux_total > 0.0);
    assert_eq!(traj.rejected_steps, 0);
    assert!(traj.final_state.u.iter().all(|&e| e >= 0.0));
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.snapshots[0].t, 96.0);
}

#[test]
fn exponential_phase_grows_at_the_principal_rate() {
    let c = section5(0.01);
    let d = disc(&c, 30.0, 400);
    let lambda = principal_eigenpair(&d, 600.0, &EigenOptions::default()).unwrap().lambda;
    let traj = integrate(&d, &inoculated(&d, 600.0, 1.0), 120.0, &IntegratorOptions::default()).unwrap();
    let window = linear_regime_window(&traj, 600.0, 0.05);
    let fit = growth_rate(&traj, window, 600.0).unwrap();
    assert!(fit.v_drift < 0.05);
    assert!(fit.points >= 20);
    assert!((fit.rate + lambda).abs() <= 0.02 * lambda.abs(), "{fit:?} vs {lambda}");
}

#[test]
fn incubation_follows_the_log_law() {
    let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
    let d = disc(&c, 30.0, 300);
    let lambda = principal_eigenpair(&d, 600.0, &EigenOptions::default()).unwrap().lambda;
    let threshold = 100.0;
    let mut log_dose = Vec::new();
    let mut times = Vec::new();
    for dose in [1e-3, 1e-2, 1e-1, 1.0] {
        let initial = inoculated(&d, 600.0, dose);
        let traj = integrate(&d, &initial, 200.0, &IntegratorOptions::default()).unwrap();
        let inc = incubation_time(&traj, threshold, initial.moment0(), lambda).unwrap();
        log_dose.push(initial.moment0().ln());
        times.push(inc.t_incubation.unwrap());
    }
    let n = times.len() as f64;
    let mx = log_dose.iter().sum::<f64>() / n;
    let my = times.iter().sum::<f64>() / n;
    let sxy: f64 = log_dose.iter().zip(&times).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = log_dose.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = -sxy / sxx;
    assert!((slope * lambda.abs() - 1.0).abs() <= 0.1, "slope {slope} vs {}", 1.0 / lambda.abs());
}

#[test]
fn minmod_run_stays_positive_and_balanced() {
    let c = section5(0.1);
    let d = disc(&c, c.default_xmax(), 200);
    let opts = IntegratorOptions {
        scheme: TransportScheme::Minmod,
        snapshot_times: vec![],
        ..Default::default()
    };
    let traj = integrate(&d, &inoculated(&d, 600.0, 1.0), 30.0, &opts).unwrap();
    assert!(traj.max_relative_residual <= 1e-8);
    assert!(traj.final_state.u.iter().all(|&e| e >= 0.0));
}

#[test]
fn low_synthesis_clears_the_infection() {
    let c = CoefficientSet::constant(240.0, 4.0, 0.001, 0.03, 0.05);
    let d = disc(&c, c.default_xmax(), 200);
    let report = stability_experiment(&d, 1e-3, &StabilityOptions::default()).unwrap();
    assert!(report.expected_stable);
    assert_eq!(report.verdict, StabilityVerdict::Stable, "{report:?}");
    assert!(report.norm_rate.unwrap() < 0.0);
    assert!((report.final_v - 60.0).abs() < 1e-6);
    let scan = scan_lambda(&d, &[0.0, 20.0, 40.0, 60.0, 80.0], &EigenOptions::default()).unwrap();
    assert!(scan.decreasing);
}

#[test]
fn unperturbed_state_stays_at_rest() {
    let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
    let d = disc(&c, c.default_xmax(), 100);
    let opts = StabilityOptions { horizon: 20.0, ..Default::default() };
    let report = stability_experiment(&d, 0.0, &opts).unwrap();
    assert_eq!(report.verdict, StabilityVerdict::AtRest);
    assert_eq!(report.final_v, 600.0);
    assert_eq!(report.final_rho, 0.0);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let c = section5(0.01);
    let d = disc(&c, c.default_xmax(), 100);
    let a = integrate(&d, &inoculated(&d, 600.0, 1.0), 20.0, &IntegratorOptions::default()).unwrap();
    let b = integrate(&d, &inoculated(&d, 600.0, 1.0), 20.0, &IntegratorOptions::default()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_admissible_runs_stay_nonnegative(
        lambda in 0.0f64..3000.0,
        gamma in 0.5f64..8.0,
        tau0 in 0.0f64..0.01,
        amplitude in 0.0f64..0.2,
        center in 0.5f64..8.0,
        beta0 in 0.001f64..0.1,
        beta1 in 0.0f64..0.05,
        mu0 in 0.0f64..0.2,
        v0 in 0.0f64..1000.0,
        dose in 0.0f64..10.0,
        minmod in any::<bool>(),
    ) {
        let c = CoefficientSet {
            lambda,
            gamma,
            x0: 0.0,
            tau: CoefficientShape::Bell { tau0, amplitude, center, sigma: 0.7 },
            beta: CoefficientShape::Affine { c0: beta1, c1: beta0 },
            mu: CoefficientShape::Constant { value: mu0 },
            kernel: prion_core::Kernel::Uniform,
        };
        let d = disc(&c, 12.0, 60);
        let opts = IntegratorOptions {
            scheme: if minmod { TransportScheme::Minmod } else { TransportScheme::Upwind },
            snapshot_times: vec![],
            ..Default::default()
        };
        let traj = integrate(&d, &inoculated(&d, v0, dose), 5.0, &opts).unwrap();
        prop_assert!(traj.v.iter().all(|&v| v >= 0.0));
        prop_assert!(traj.rho.iter().all(|&r| r >= 0.0));
        prop_assert!(traj.final_state.u.iter().all(|&e| e >= 0.0));
        prop_assert!(traj.max_relative_residual <= 1e-8, "{}", traj.max_relative_residual);
    }
}
