//! The `summary.json` document written for every run.

use prion_core::discrete::DiscrepancyReport;
use prion_core::dynamics::{GrowthFit, IncubationResult, StabilityVerdict};
use prion_core::eigen::{HypothesisConstants, MomentEigenvalue};
use prion_core::steady::ProfileCheck;
use prion_core::sweep::{SweepAxis, SweepMode};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigIssue, Experiment, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Some sweep items failed, or some validation checks failed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// sha256 of the canonical config (output section excluded).
    pub config_digest: String,
    /// sha256 of the cell edges.
    pub grid_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest eigen residual, or largest relative conservation residual.
    pub max_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub truncation_flux: Option<f64>,
    pub warnings: Vec<String>,
    /// Files written next to `summary.json`.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub v: f64,
    pub lambda: f64,
    pub growth_rate: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub lambda_adjoint: Option<f64>,
    pub adjoint_residual: Option<f64>,
    pub moments: Option<MomentEigenvalue>,
    /// Λ from the constant-coefficient formula, when it applies.
    pub closed_form: Option<f64>,
    pub truncation_outflow: f64,
    pub n_modes: Option<usize>,
    pub center_of_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResults {
    pub rows: Vec<EigenRow>,
    pub decreasing: bool,
    /// Λ(V) ≤ μ(x₀) for every V.
    pub bounded_by_mu: bool,
    pub hypotheses: Option<HypothesisConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantOracle {
    pub v_inf: f64,
    pub rho_inf: f64,
    pub center_of_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyResults {
    pub v_inf: f64,
    pub vbar: f64,
    pub exists: bool,
    pub rho_inf: Option<f64>,
    pub lambda_at_root: f64,
    pub bisections: usize,
    pub non_monotone_warning: bool,
    pub tau_integral: f64,
    pub center_of_mass: f64,
    pub n_modes: usize,
    pub mode_locations: Vec<f64>,
    pub secondary_mass_fraction: f64,
    pub curvature_term: f64,
    pub curvature_threshold: f64,
    pub necessary_condition_met: Option<bool>,
    pub profile_check: Option<ProfileCheck>,
    pub closed_form: Option<ConstantOracle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub epsilon: f64,
    pub verdict: StabilityVerdict,
    pub lambda_vbar: f64,
    pub expected_stable: bool,
    pub alpha: f64,
    pub norm_rate: Option<f64>,
    pub norm_r_squared: Option<f64>,
    pub early_growth_rate: Option<f64>,
    pub norm_initial: f64,
    pub norm_final: f64,
    pub max_weighted_mass_ratio: f64,
    pub final_v: f64,
    pub final_rho: f64,
    pub final_center_of_mass: Option<f64>,
    pub hypotheses: HypothesisConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResults {
    pub t_end: f64,
    pub steps: u64,
    pub rejected_steps: u64,
    pub max_relative_residual: f64,
    pub truncation_flux_total: f64,
    pub final_v: f64,
    pub final_rho: f64,
    pub final_p: f64,
    pub inoculation: f64,
    pub lambda_vbar: f64,
    pub growth: Option<GrowthFit>,
    pub incubation: Option<IncubationResult>,
    pub snapshot_times: Vec<f64>,
    pub stability: Option<StabilitySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ItemSummary {
    Dynamics {
        inoculation: f64,
        incubation: IncubationResult,
        growth: Option<GrowthFit>,
        lambda_vbar: f64,
        max_relative_residual: f64,
        truncation_flux_total: f64,
    },
    Eigen {
        lambda: f64,
        growth_rate: f64,
        tau_eff: f64,
        n_modes: usize,
        mode_locations: Vec<f64>,
        center_of_mass: f64,
    },
    Steady {
        v_inf: f64,
        exists: bool,
        rho_inf: Option<f64>,
        n_modes: usize,
        mode_locations: Vec<f64>,
        secondary_mass_fraction: f64,
        center_of_mass: f64,
        necessary_condition_met: Option<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub result: Option<ItemSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub axis: SweepAxis,
    pub mode: SweepMode,
    pub rows: Vec<SweepRow>,
    pub failures: usize,
    pub growth_maximizer: Option<f64>,
    pub bimodality_onset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResults {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
    pub discrete: Option<DiscrepancyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Results {
    Eigen(EigenResults),
    Steady(SteadyResults),
    Simulate(SimulateResults),
    Sweep(SweepResults),
    Validate(ValidateResults),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: Experiment,
    pub status: RunStatus,
    pub config: RunConfig,
    pub results: Option<Results>,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
    pub errors: Vec<String>,
}

/// Contents of `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `config` or `runtime`.
    pub kind: String,
    pub message: String,
    pub issues: Vec<ConfigIssue>,
}
