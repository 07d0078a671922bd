use std::sync::Arc;

use prion_core::eigen::EigenOptions;
use prion_core::steady::SteadyOptions;
use prion_core::sweep::{
    bimodality_onset, interior_growth_maximizer, run_sweep, DynamicsPlan, SweepAxis, SweepMode,
    SweepOutcome, SweepPlan,
};
use prion_core::{CoefficientSet, CoefficientShape, SizeGrid};

fn section5_bell() -> CoefficientSet {
    let mut c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
    c.tau = CoefficientShape::Bell {
        tau0: 0.001,
        amplitude: 0.01,
        center: 2.0,
        sigma: 0.1f64.sqrt(),
    };
    c
}

fn plan(axis: SweepAxis, values: Vec<f64>) -> SweepPlan {
    SweepPlan {
        axis,
        values,
        mode: axis.default_mode(),
        dynamics: DynamicsPlan {
            t_end: 120.0,
            ..Default::default()
        },
        steady: SteadyOptions::default(),
        eigen: EigenOptions::default(),
    }
}

fn incubation_times(items: &[prion_core::sweep::SweepItem]) -> Vec<f64> {
    items
        .iter()
        .map(|it| match &it.outcome {
            Ok(SweepOutcome::Dynamics(d)) => d.incubation.t_incubation.unwrap(),
            other => panic!("unexpected outcome {other:?}"),
        })
        .collect()
}

#[test]
fn stronger_conversion_peak_accumulates_faster() {
    let grid = Arc::new(SizeGrid::uniform(0.0, 30.0, 200).unwrap());
    let items = run_sweep(&section5_bell(), &grid, &plan(SweepAxis::BellAmplitude, vec![0.001, 0.01, 0.1]));
    let t = incubation_times(&items);
    assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
    for it in &items {
        let Ok(SweepOutcome::Dynamics(d)) = &it.outcome else { unreachable!() };
        let profile = d.probe_profile.as_ref().unwrap();
        assert!((grid.integrate(profile) - 1.0).abs() < 1e-12);
        assert!(d.max_relative_residual <= 1e-8);
    }
}

#[test]
fn stronger_fragmentation_accumulates_faster() {
    let grid = Arc::new(SizeGrid::uniform(0.0, 30.0, 200).unwrap());
    let items = run_sweep(
        &section5_bell(),
        &grid,
        &plan(SweepAxis::FragmentationSlope, vec![0.0314, 0.0471, 0.0628]),
    );
    let t = incubation_times(&items);
    assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
}

#[test]
fn fittest_tightness_is_not_bimodal() {
    let mut base = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
    base.tau = CoefficientShape::ScaledBell {
        tau0: 0.001,
        alpha: 1.0,
        center: 10.0,
    };
    let grid = Arc::new(SizeGrid::uniform(0.0, 60.0, 800).unwrap());
    let alphas: Vec<f64> = (0..=15).map(|k| 10f64.powf(-3.0 + 0.2 * k as f64)).collect();
    let items = run_sweep(&base, &grid, &plan(SweepAxis::Tightness, alphas));
    let best = interior_growth_maximizer(&items).expect("interior maximizer");
    let onset = bimodality_onset(&items).expect("bimodal profiles for tight peaks");
    assert!(onset > best, "onset {onset} vs maximizer {best}");
}

#[test]
fn peak_translation_orders_the_splitting() {
    let com = 0.05 / 0.03;
    let grid = Arc::new(SizeGrid::uniform(0.0, 20.0, 400).unwrap());
    let factors = [0.5, 1.0, 2.0, 4.0];
    let items = run_sweep(
        &section5_bell(),
        &grid,
        &plan(SweepAxis::PeakLocus, factors.iter().map(|k| k * com).collect()),
    );
    let fractions: Vec<f64> = items
        .iter()
        .map(|it| match &it.outcome {
            Ok(SweepOutcome::Steady(s)) => s.secondary_mass_fraction,
            other => panic!("unexpected outcome {other:?}"),
        })
        .collect();
    assert!(fractions[1] > fractions[0] && fractions[1] > fractions[2] && fractions[2] > fractions[3], "{fractions:?}");
}

#[test]
fn dose_sweep_sets_the_inoculum() {
    let grid = Arc::new(SizeGrid::uniform(0.0, 30.0, 100).unwrap());
    let mut p = plan(SweepAxis::Dose, vec![0.1, 1.0]);
    p.dynamics.t_end = 10.0;
    let items = run_sweep(&section5_bell(), &grid, &p);
    let inoc: Vec<f64> = items
        .iter()
        .map(|it| match &it.outcome {
            Ok(SweepOutcome::Dynamics(d)) => d.inoculation,
            other => panic!("unexpected outcome {other:?}"),
        })
        .collect();
    assert!((inoc[1] / inoc[0] - 10.0).abs() < 1e-12);
}

#[test]
fn sweep_mode_defaults_follow_the_axis() {
    assert_eq!(SweepAxis::Tightness.default_mode(), SweepMode::Eigen);
    assert_eq!(SweepAxis::PeakLocus.default_mode(), SweepMode::Steady);
    assert_eq!(SweepAxis::Dose.default_mode(), SweepMode::Dynamics);
}
