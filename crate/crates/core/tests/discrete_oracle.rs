use std::sync::Arc;

use prion_core::discrete::{compare_continuum, DiscreteModel, DiscreteOptions, MaselParams};
use prion_core::dynamics::{integrate, linear_regime_window, IntegratorOptions};
use prion_core::state::inoculum_profile;
use prion_core::{Discretization, PolymerState, SizeGrid};
use proptest::prelude::*;

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

fn continuum_disc(p: &MaselParams, xmax: f64, n: usize) -> Arc<Discretization> {
    let g = Arc::new(SizeGrid::uniform(0.0, xmax, n).unwrap());
    Arc::new(Discretization::new(&p.continuum(), g).unwrap())
}

#[test]
fn uninfected_monomer_paths_coincide() {
    let p = params();
    let model = DiscreteModel::new(p, 200).unwrap();
    let d = continuum_disc(&p, 200.0, 200);
    let dt = 0.01;
    let discrete = model
        .integrate(
            &model.state_from_fn(10.0, |_| 0.0),
            5.0,
            &DiscreteOptions { fixed_dt: Some(dt), ..Default::default() },
        )
        .unwrap();
    let initial = PolymerState::from_fn(d.grid_arc().clone(), 10.0, |_| 0.0).unwrap();
    let opts = IntegratorOptions {
        fixed_dt: Some(dt),
        snapshot_times: vec![],
        ..Default::default()
    };
    let continuum = integrate(&d, &initial, 5.0, &opts).unwrap();
    let report = compare_continuum(&p, &p.continuum(), &discrete, &continuum, None).unwrap();
    assert!(report.v_identical, "{report:?}");
    assert_eq!(report.v_discrepancy, 0.0);
    let exact = 600.0 - 590.0 * (-20.0f64).exp();
    assert!((discrete.v.last().unwrap() - exact).abs() < 1e-6);
}

#[test]
fn exponential_growth_rates_agree() {
    let p = params();
    let model = DiscreteModel::new(p, p.default_truncation()).unwrap();
    let d = continuum_disc(&p, 500.0, 800);
    let discrete = model
        .integrate(&model.state_from_fn(600.0, inoculum_profile), 60.0, &DiscreteOptions::default())
        .unwrap();
    let initial = PolymerState::from_fn(d.grid_arc().clone(), 600.0, inoculum_profile).unwrap();
    let opts = IntegratorOptions { snapshot_times: vec![], ..Default::default() };
    let continuum = integrate(&d, &initial, 60.0, &opts).unwrap();
    let window = linear_regime_window(&continuum, 600.0, 0.05);
    let report = compare_continuum(&p, &p.continuum(), &discrete, &continuum, Some(window)).unwrap();
    let gap = report.growth_rate_discrepancy.unwrap();
    assert!(gap <= 0.05, "{report:?}");
    // each side against its own closure
    let closure = p.moment_growth_rate(600.0);
    assert!((report.discrete_growth_rate.unwrap() / closure - 1.0).abs() < 0.02, "{report:?}");
    let square_root = (p.tau * p.beta * 600.0).sqrt() - p.mu;
    assert!((report.continuum_growth_rate.unwrap() / square_root - 1.0).abs() < 0.02, "{report:?}");
    // the inoculum decays like 1/(2x²), so u_N / max u starts near 2/N²
    let n = p.default_truncation() as f64;
    assert!(discrete.overflow < 5.0 / (n * n), "overflow {}", discrete.overflow);
}

#[test]
fn long_run_mean_size_follows_the_closure() {
    let p = params();
    let model = DiscreteModel::new(p, 600).unwrap();
    let traj = model
        .integrate(
            &model.state_from_fn(p.lambda / p.gamma, |i| (-i / 20.0).exp()),
            3000.0,
            &DiscreteOptions { sample_interval: 10.0, ..Default::default() },
        )
        .unwrap();
    let (total, mass) = model.moments(&traj.final_state.u);
    let mean = mass / total;
    assert!((mean / p.steady_mean_size() - 1.0).abs() < 0.01, "{mean}");
    assert!((mean / (p.mu / p.beta) - 1.0).abs() < 0.05, "{mean}");
    assert!((traj.final_state.v / p.steady_monomer() - 1.0).abs() < 0.01);
}

#[test]
fn miscalibrated_comparison_is_rejected() {
    let p = params();
    let model = DiscreteModel::new(p, 50).unwrap();
    let discrete = model.integrate(&model.state_from_fn(10.0, |_| 0.0), 1.0, &DiscreteOptions::default()).unwrap();
    let d = continuum_disc(&p, 50.0, 50);
    let initial = PolymerState::from_fn(d.grid_arc().clone(), 10.0, |_| 0.0).unwrap();
    let continuum = integrate(&d, &initial, 1.0, &IntegratorOptions::default()).unwrap();
    let mut other = p.continuum();
    other.gamma = 5.0;
    assert!(compare_continuum(&p, &other, &discrete, &continuum, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn discrete_mass_balance_and_positivity(
        lambda in 0.0f64..3000.0,
        tau in 0.0f64..0.05,
        beta in 0.0f64..0.01,
        mu in 0.0f64..0.2,
        n0 in 1usize..5,
        v0 in 0.0f64..800.0,
        scale in 0.0f64..5.0,
    ) {
        let p = MaselParams { lambda, gamma: 4.0, tau, beta, mu, n0 };
        let model = DiscreteModel::new(p, 120).unwrap();
        let s = model.state_from_fn(v0, |i| scale * (-(i - 10.0f64).powi(2) / 20.0).exp());
        let traj = model.integrate(&s, 3.0, &DiscreteOptions::default()).unwrap();
        prop_assert!(traj.max_relative_residual <= 1e-9, "{}", traj.max_relative_residual);
        prop_assert!(traj.final_state.u.iter().all(|&e| e >= 0.0));
        prop_assert!(traj.v.iter().all(|&v| v >= 0.0));
    }
}
