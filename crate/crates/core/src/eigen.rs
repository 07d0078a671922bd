//! Principal eigenpair of the growth-fragmentation operator.
//!
//! Sign convention: `Λ(V)` is stored as a loss rate, `(−L_V) 𝒰 = Λ 𝒰`, so a
//! polymer population near the monomer level `V` evolves like `exp(−Λ(V) t)`.
//! User-facing growth rates are always `−Λ`.
//!
//! The discrete generator is Metzler (nonnegative off-diagonal) and upper
//! Hessenberg. Its rightmost eigenvalue `s = −Λ` is found by a short power
//! warm start on `L + cI` followed by shifted inverse iteration
//! `x ← (σI − L)⁻¹ x` with `σ` kept above the Collatz–Wielandt upper bound
//! `max_i (Lx)_i / x_i ≥ s`. For `σ > s` the resolvent is entrywise
//! nonnegative, so iterates stay nonnegative.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::hessenberg::HessenbergLu;
use crate::operator::{Discretization, FragOperator};

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenOptions {
    /// Residual tolerance relative to the operator norm.
    pub tol_factor: f64,
    pub max_iterations: usize,
    pub warm_start_iterations: usize,
    /// Fraction of `[x0, xmax]` trusted for adjoint-derived quantities.
    pub trusted_fraction: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol_factor: 1e-10,
            max_iterations: 300,
            warm_start_iterations: 20,
            trusted_fraction: 0.8,
        }
    }
}

/// How the adjoint vector was scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiNormalization {
    /// φ(x₀) = 1 by linear extrapolation of the first two cells.
    UnitAtX0,
    /// ⟨φ, 𝒰⟩ = 1.
    UnitPairing,
}

/// Principal eigenelements at one monomer level.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub v: f64,
    /// Λ(V), loss-rate sign.
    pub lambda: f64,
    /// 𝒰 with Σ 𝒰_i h_i = 1; `None` at V = 0 where it degenerates.
    pub u_vec: Option<Vec<f64>>,
    /// Adjoint eigenvector, when computed.
    pub phi_vec: Option<Vec<f64>>,
    pub phi_normalization: PhiNormalization,
    /// ⟨φ, 𝒰⟩ under the stored normalizations.
    pub phi_pairing: Option<f64>,
    /// Λ obtained from the adjoint iteration.
    pub lambda_adjoint: Option<f64>,
    /// ‖(L_V + Λ) 𝒰‖ in the h-weighted 1-norm.
    pub residual: f64,
    pub adjoint_residual: Option<f64>,
    pub tolerance: f64,
    pub iterations: usize,
    /// Residual after each inverse iteration.
    pub residual_log: Vec<f64>,
    /// Polymer count leaving through `xmax` per unit time for 𝒰.
    pub truncation_outflow: f64,
}

impl EigenSolution {
    /// Exponential growth rate −Λ(V).
    pub fn growth_rate(&self) -> f64 {
        -self.lambda
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Primal,
    Adjoint,
}

struct PerronResult {
    s: f64,
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    log: Vec<f64>,
    tolerance: f64,
}

fn apply(op: &FragOperator, side: Side, x: &[f64]) -> Vec<f64> {
    match side {
        Side::Primal => op.apply(x),
        Side::Adjoint => op.adjoint().apply(x),
    }
}

/// Collatz–Wielandt bounds over entries that are not negligible.
fn cw_bounds(x: &[f64], lx: &[f64]) -> (f64, f64) {
    let max = x.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-30 * max;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in x.iter().zip(lx) {
        if *a > floor {
            let r = b / a;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn normalize(x: &mut [f64], h: &[f64]) {
    let total: f64 = x.iter().zip(h).map(|(a, b)| a.abs() * b).sum();
    if total > 0.0 {
        x.iter_mut().for_each(|e| *e /= total);
    }
}

fn weighted_l1(x: &[f64], h: &[f64]) -> f64 {
    x.iter().zip(h).map(|(a, b)| a.abs() * b).sum()
}

/// Rayleigh estimate `⟨x, Lx⟩ / ⟨x, x⟩` in the h-weighted inner product.
fn rayleigh(x: &[f64], lx: &[f64], h: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(lx).zip(h).map(|((a, b), w)| a * b * w).sum();
    let den: f64 = x.iter().zip(h).map(|(a, w)| a * a * w).sum();
    num / den
}

fn residual_of(x: &[f64], lx: &[f64], s: f64, h: &[f64]) -> f64 {
    x.iter()
        .zip(lx)
        .zip(h)
        .map(|((a, b), w)| (b - s * a).abs() * w)
        .sum()
}

fn perron(op: &FragOperator, side: Side, opts: &EigenOptions) -> Result<PerronResult> {
    let n = op.len();
    let h = op.grid().widths().to_vec();
    let dense = op.dense();
    let scale = op.norm().max(f64::MIN_POSITIVE);
    let tol = opts.tol_factor * scale;
    let shift = (0..n).map(|j| -dense[j * n + j]).fold(0.0, f64::max);

    let mut x = vec![1.0; n];
    normalize(&mut x, &h);
    for _ in 0..opts.warm_start_iterations {
        let lx = apply(op, side, &x);
        x = lx.iter().zip(&x).map(|(a, b)| a + shift * b).collect();
        normalize(&mut x, &h);
    }

    let factor_at = |sigma: f64| -> Result<HessenbergLu> {
        let mut a: Vec<f64> = dense.iter().map(|e| -e).collect();
        for j in 0..n {
            a[j * n + j] += sigma;
        }
        HessenbergLu::factor(a, n).ok_or(ModelError::NotConverged {
            iterations: 0,
            residual: f64::NAN,
        })
    };

    let mut lx = apply(op, side, &x);
    let (mut lo, mut hi) = cw_bounds(&x, &lx);
    let margin = |lo: f64, hi: f64| (0.05 * (hi - lo)).max(1e-12 * scale + 1e-14);
    let mut sigma = hi + margin(lo, hi);
    let mut lu = factor_at(sigma)?;
    let mut log = Vec::new();
    let mut residual = f64::INFINITY;
    let mut s = rayleigh(&x, &lx, &h);

    for it in 1..=opts.max_iterations {
        let mut y = x.clone();
        match side {
            Side::Primal => lu.solve(&mut y),
            Side::Adjoint => {
                y.iter_mut().zip(&h).for_each(|(a, w)| *a *= w);
                lu.solve_transpose(&mut y);
                y.iter_mut().zip(&h).for_each(|(a, w)| *a /= w);
            }
        }
        let ymax = y.iter().cloned().fold(0.0, f64::max);
        let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(ymax > 0.0) || !ymax.is_finite() || ymin < -1e-12 * ymax {
            // shift fell below the spectral abscissa: back off and refactor
            sigma += 10.0 * margin(lo, hi) + (sigma - lo).abs();
            lu = factor_at(sigma)?;
            continue;
        }
        y.iter_mut().for_each(|e| *e = e.max(0.0));
        normalize(&mut y, &h);
        x = y;
        lx = apply(op, side, &x);
        s = rayleigh(&x, &lx, &h);
        residual = residual_of(&x, &lx, s, &h);
        let previous = log.last().copied().unwrap_or(f64::INFINITY);
        log.push(residual);
        let (new_lo, new_hi) = cw_bounds(&x, &lx);
        lo = new_lo.max(lo.min(new_hi));
        hi = new_hi.min(hi).max(lo);
        // once within tolerance, keep polishing while it still pays off
        if residual <= 1e-3 * tol || (residual <= tol && residual > 0.5 * previous) {
            return Ok(PerronResult {
                s,
                x,
                residual,
                iterations: it,
                log,
                tolerance: tol,
            });
        }
        let target = hi + margin(lo, hi);
        if target < sigma - 0.5 * (sigma - hi).max(0.0) || (sigma - hi) > 4.0 * margin(lo, hi) {
            sigma = target;
            lu = factor_at(sigma)?;
        }
    }
    let _ = s;
    Err(ModelError::NotConverged {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Λ(0) from the first-moment identity: all mass sits at `x0`, so Λ(0) = μ(x₀).
fn lambda_at_zero(disc: &Discretization) -> f64 {
    let c = disc.coefficients();
    c.mu.eval(c.x0)
}

fn check_nonnegative(x: &mut [f64], what: &'static str) -> Result<()> {
    let max = x.iter().cloned().fold(0.0, f64::max);
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, &e)| e < -1e-12 * max) {
        return Err(ModelError::PositivityViolation { what, index, value });
    }
    x.iter_mut().for_each(|e| *e = e.max(0.0));
    Ok(())
}

/// Principal eigenpair (Λ(V), 𝒰(V; ·)) with Σ 𝒰 h = 1.
pub fn principal_eigenpair(
    disc: &Arc<Discretization>,
    v: f64,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    let op = FragOperator::assemble(disc.clone(), v)?;
    if v == 0.0 {
        return Ok(EigenSolution {
            v,
            lambda: lambda_at_zero(disc),
            u_vec: None,
            phi_vec: None,
            phi_normalization: PhiNormalization::UnitAtX0,
            phi_pairing: None,
            lambda_adjoint: None,
            residual: 0.0,
            adjoint_residual: None,
            tolerance: 0.0,
            iterations: 0,
            residual_log: Vec::new(),
            truncation_outflow: 0.0,
        });
    }
    let wrap = |e: ModelError| ModelError::AtMonomerLevel {
        v,
        source: Box::new(e),
    };
    let mut res = perron(&op, Side::Primal, opts).map_err(wrap)?;
    check_nonnegative(&mut res.x, "eigenvector").map_err(wrap)?;
    let n = op.len();
    let outflow = v * disc.sampled().tau[n - 1] * res.x[n - 1];
    Ok(EigenSolution {
        v,
        lambda: -res.s,
        u_vec: Some(res.x),
        phi_vec: None,
        phi_normalization: PhiNormalization::UnitAtX0,
        phi_pairing: None,
        lambda_adjoint: None,
        residual: res.residual,
        adjoint_residual: None,
        tolerance: res.tolerance,
        iterations: res.iterations,
        residual_log: res.log,
        truncation_outflow: outflow,
    })
}

/// Adjoint eigenvector scaled to φ(x₀) = 1, and the adjoint eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub v: f64,
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub residual_log: Vec<f64>,
}

/// Extrapolated value at `x0` from the first two cells.
fn value_at_x0(disc: &Discretization, phi: &[f64]) -> f64 {
    let x = disc.grid().centers();
    let x0 = disc.grid().x0();
    let slope = (phi[1] - phi[0]) / (x[1] - x[0]);
    let at = phi[0] + (x0 - x[0]) * slope;
    if at > 0.0 {
        at
    } else {
        phi[0]
    }
}

pub fn adjoint_eigenpair(
    disc: &Arc<Discretization>,
    v: f64,
    opts: &EigenOptions,
) -> Result<AdjointSolution> {
    if v == 0.0 {
        return Err(ModelError::Domain(
            "adjoint eigenproblem is degenerate at V = 0".into(),
        ));
    }
    let op = FragOperator::assemble(disc.clone(), v)?;
    let wrap = |e: ModelError| ModelError::AtMonomerLevel {
        v,
        source: Box::new(e),
    };
    let mut res = perron(&op, Side::Adjoint, opts).map_err(wrap)?;
    check_nonnegative(&mut res.x, "adjoint eigenvector").map_err(wrap)?;
    let at0 = value_at_x0(disc, &res.x);
    let phi: Vec<f64> = res.x.iter().map(|e| e / at0).collect();
    let residual = res.residual / at0 / weighted_l1(&res.x, op.grid().widths()).max(f64::MIN_POSITIVE)
        * weighted_l1(&res.x, op.grid().widths());
    Ok(AdjointSolution {
        v,
        lambda: -res.s,
        phi,
        residual,
        iterations: res.iterations,
        residual_log: res.log,
    })
}

/// Primal and adjoint eigenvectors together, with Λ* checked against Λ.
pub fn eigenpair_with_adjoint(
    disc: &Arc<Discretization>,
    v: f64,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    let mut sol = principal_eigenpair(disc, v, opts)?;
    if v == 0.0 {
        return Ok(sol);
    }
    let adj = adjoint_eigenpair(disc, v, opts)?;
    let rel = (adj.lambda - sol.lambda).abs() / sol.lambda.abs().max(1e-300);
    let abs_ok = (adj.lambda - sol.lambda).abs() <= 10.0 * sol.tolerance;
    if rel > 1e-8 && !abs_ok {
        return Err(ModelError::AtMonomerLevel {
            v,
            source: Box::new(ModelError::Domain(format!(
                "adjoint eigenvalue {} disagrees with primal {}",
                adj.lambda, sol.lambda
            ))),
        });
    }
    let u = sol.u_vec.as_ref().expect("nonzero V has an eigenvector");
    sol.phi_pairing = Some(disc.grid().inner(&adj.phi, u));
    sol.lambda_adjoint = Some(adj.lambda);
    sol.adjoint_residual = Some(adj.residual);
    sol.phi_vec = Some(adj.phi);
    Ok(sol)
}

/// Rescales φ so that ⟨φ, 𝒰⟩ = 1.
pub fn renormalize_phi_pairing(sol: &mut EigenSolution) {
    if let (Some(phi), Some(p)) = (sol.phi_vec.as_mut(), sol.phi_pairing) {
        phi.iter_mut().for_each(|e| *e /= p);
        sol.phi_pairing = Some(1.0);
        sol.phi_normalization = PhiNormalization::UnitPairing;
    }
}

/// Λ recomputed from the integrated eigen-equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEigenvalue {
    /// Zeroth-moment route `∫(μ − β)𝒰 / ∫𝒰` (uniform kernel, x₀ = 0 form,
    /// with the in-grid fragment count for x₀ > 0).
    pub number_route: f64,
    /// First-moment route `(−V∫τ𝒰 + ∫xμ𝒰) / ∫x𝒰`.
    pub mass_route: f64,
    /// Absolute bound on the truncation contribution to either route.
    pub truncation_bound: f64,
    /// Mean size ∫x𝒰 / ∫𝒰.
    pub mean_size: f64,
}

pub fn eigenvalue_from_moments(sol: &EigenSolution, disc: &Discretization) -> Option<MomentEigenvalue> {
    let u = sol.u_vec.as_ref()?;
    let grid = disc.grid();
    let x = grid.centers();
    let h = grid.widths();
    let s = disc.sampled();
    let beta = disc.effective_beta();
    let x0 = grid.x0();
    let m0 = grid.integrate(u);
    let m1 = grid.inner(x, u);
    let mut number = 0.0;
    let mut returned = 0.0;
    for j in 0..u.len() {
        let fragments = if beta[j] > 0.0 { 2.0 * (1.0 - x0 / x[j]) } else { 0.0 };
        number += (s.mu[j] + beta[j] * (1.0 - fragments)) * u[j] * h[j];
        returned += 2.0 * disc.kernel().returned_moment(j) * beta[j] * u[j] * h[j];
    }
    let n = u.len();
    let outflow = sol.truncation_outflow;
    let mass = (-sol.v * disc.tau_moment(u) + disc.mu_mass_loss(u) + returned) / m1;
    Some(MomentEigenvalue {
        number_route: number / m0,
        mass_route: mass,
        truncation_bound: (outflow / m0).max(outflow * (x[n - 1] + h[n - 1]) / m1),
        mean_size: m1 / m0,
    })
}

/// Λ over a list of monomer levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScan {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Strictly decreasing across the scan, up to a 1e-10 band.
    pub decreasing: bool,
    /// Λ(0) − μ₀ when μ is constant and V = 0 is scanned.
    pub lambda0_minus_mu0: Option<f64>,
    /// Sign of Λ at the largest scanned V.
    pub sign_at_largest: f64,
    /// min τ(x)/x over the grid; positive means Λ(∞) = −∞.
    pub min_tau_over_x: f64,
}

impl LambdaScan {
    /// Whether Λ(V) ≤ `bound` everywhere on the scan.
    pub fn bounded_by(&self, bound: f64) -> bool {
        self.lambda.iter().all(|&l| l <= bound + 1e-12 * bound.abs().max(1.0))
    }
}

pub fn scan_lambda(disc: &Arc<Discretization>, v_list: &[f64], opts: &EigenOptions) -> Result<LambdaScan> {
    if v_list.windows(2).any(|w| w[1] <= w[0]) || v_list.iter().any(|&v| !(v >= 0.0)) {
        return Err(ModelError::Domain(
            "V list must be nonnegative and strictly increasing".into(),
        ));
    }
    let solutions: Vec<EigenSolution> = v_list
        .par_iter()
        .map(|&v| principal_eigenpair(disc, v, opts))
        .collect::<Result<_>>()?;
    let lambda: Vec<f64> = solutions.iter().map(|s| s.lambda).collect();
    let decreasing = lambda.windows(2).all(|w| w[1] < w[0] + 1e-10);
    let mu0 = disc.coefficients().mu.as_constant();
    let lambda0_minus_mu0 = match (mu0, v_list.first()) {
        (Some(m), Some(&v)) if v == 0.0 => Some(lambda[0] - m),
        _ => None,
    };
    let grid = disc.grid();
    let min_tau_over_x = grid
        .centers()
        .iter()
        .zip(&disc.sampled().tau)
        .map(|(x, t)| t / x)
        .fold(f64::INFINITY, f64::min);
    Ok(LambdaScan {
        v: v_list.to_vec(),
        sign_at_largest: lambda.last().map(|l| l.signum()).unwrap_or(0.0),
        residual: solutions.iter().map(|s| s.residual).collect(),
        iterations: solutions.iter().map(|s| s.iterations).collect(),
        lambda,
        decreasing,
        lambda0_minus_mu0,
        min_tau_over_x,
    })
}

/// Numerical estimates of the constants in the stability hypotheses
/// `|τ φ'| ≤ K₁ φ`, `τ ≤ K₂ φ`, `τ ≥ k φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub v: f64,
    pub lambda: f64,
    pub k1: f64,
    pub k2: f64,
    pub k_lower: f64,
    /// The infimum defining `k` sits at the right end of the trusted region,
    /// i.e. it keeps shrinking as the domain grows.
    pub k_domain_dependent: bool,
    /// Right end of the region the estimates are taken over.
    pub trusted_xmax: f64,
    /// `V / Λ(V)`, absent when Λ(V) = 0.
    pub v_over_lambda: Option<f64>,
    /// `k / (K₁ K₂)`, absent when K₁K₂ = 0.
    pub k_over_k1k2: Option<f64>,
}

pub fn hypothesis_constants(
    disc: &Arc<Discretization>,
    v: f64,
    opts: &EigenOptions,
) -> Result<HypothesisConstants> {
    let adj = adjoint_eigenpair(disc, v, opts)?;
    hypothesis_constants_from(disc, &adj, opts.trusted_fraction)
}

pub fn hypothesis_constants_from(
    disc: &Discretization,
    adj: &AdjointSolution,
    trusted_fraction: f64,
) -> Result<HypothesisConstants> {
    let grid = disc.grid();
    let x = grid.centers();
    let tau = &disc.sampled().tau;
    let phi = &adj.phi;
    let n = phi.len();
    let limit = grid.x0() + trusted_fraction * (grid.xmax() - grid.x0());
    let m = x.iter().take_while(|&&xi| xi <= limit).count().max(2);
    if let Some((index, &value)) = phi[..m].iter().enumerate().find(|(_, &p)| p <= 0.0) {
        return Err(ModelError::PositivityViolation {
            what: "adjoint eigenvector",
            index,
            value,
        });
    }
    let derivative = |i: usize| -> f64 {
        if i == 0 {
            (phi[1] - phi[0]) / (x[1] - x[0])
        } else if i + 1 >= n {
            (phi[i] - phi[i - 1]) / (x[i] - x[i - 1])
        } else {
            (phi[i + 1] - phi[i - 1]) / (x[i + 1] - x[i - 1])
        }
    };
    let mut k1: f64 = 0.0;
    let mut k2: f64 = 0.0;
    let mut k = f64::INFINITY;
    let mut k_at = 0;
    for i in 0..m {
        k1 = k1.max((tau[i] * derivative(i)).abs() / phi[i]);
        let ratio = tau[i] / phi[i];
        k2 = k2.max(ratio);
        if ratio < k {
            k = ratio;
            k_at = i;
        }
    }
    Ok(HypothesisConstants {
        v: adj.v,
        lambda: adj.lambda,
        k1,
        k2,
        k_lower: k,
        k_domain_dependent: k_at + 1 == m,
        trusted_xmax: x[m - 1],
        v_over_lambda: (adj.lambda != 0.0).then(|| adj.v / adj.lambda),
        k_over_k1k2: (k1 * k2 > 0.0).then(|| k / (k1 * k2)),
    })
}

/// Rightmost eigenvalue real part of the dense generator by a full
/// nonsymmetric eigendecomposition (validation route; O(n³)).
pub fn dense_growth_rate(disc: &Arc<Discretization>, v: f64) -> Result<f64> {
    let op = FragOperator::assemble(disc.clone(), v)?;
    let n = op.len();
    let m = nalgebra::DMatrix::from_row_slice(n, n, &op.dense());
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Closed-form eigenelements for the explicitly solvable coefficient families.
pub mod closed_form {
    /// Λ(V) = μ₀ − √(τ₀β₀V) for τ ≡ τ₀, β = β₀x, μ ≡ μ₀.
    pub fn constant_lambda(mu0: f64, tau0: f64, beta0: f64, v: f64) -> f64 {
        mu0 - (tau0 * beta0 * v).sqrt()
    }

    /// Scale L of the affine adjoint eigenvector φ(x) = 1 + x/L.
    pub fn adjoint_length(tau0: f64, beta0: f64, v: f64) -> f64 {
        (tau0 * v / beta0).sqrt()
    }

    /// V∞ solving Λ(V∞) = 0 in the constant-coefficient case.
    pub fn constant_v_inf(mu0: f64, tau0: f64, beta0: f64) -> f64 {
        mu0 * mu0 / (tau0 * beta0)
    }

    /// Λ(V) for β = β₁ + β₀x, τ = τ₀ + τ₁x, μ ≡ μ₀: Λ = μ₀ + Z with
    /// (Z + β₁)(Z + Vτ₁) = Vτ₀β₀ and Z < −Vτ₁.
    pub fn affine_lambda(mu0: f64, beta1: f64, beta0: f64, tau0: f64, tau1: f64, v: f64) -> f64 {
        // Z² + (β₁ + Vτ₁)Z + β₁Vτ₁ − Vτ₀β₀ = 0, smaller root
        let b = beta1 + v * tau1;
        let c = beta1 * v * tau1 - v * tau0 * beta0;
        let z = (-b - (b * b - 4.0 * c).sqrt()) / 2.0;
        mu0 + z
    }

    /// Stationary profile shape Φ(r) = (r + r²/2) exp(−r − r²/2).
    pub fn profile(r: f64) -> f64 {
        (r + 0.5 * r * r) * (-r - 0.5 * r * r).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSet, CoefficientShape};
    use crate::grid::SizeGrid;

    fn disc(coeffs: &CoefficientSet, xmax: f64, n: usize) -> Arc<Discretization> {
        let g = Arc::new(SizeGrid::uniform(coeffs.x0, xmax, n).unwrap());
        Arc::new(Discretization::new(coeffs, g).unwrap())
    }

    fn constant() -> CoefficientSet {
        CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05)
    }

    #[test]
    fn matches_closed_form_constant_case() {
        let d = disc(&constant(), 50.0 / 3.0, 400);
        for v in [10.0, 100.0, 600.0] {
            let sol = principal_eigenpair(&d, v, &EigenOptions::default()).unwrap();
            let exact = closed_form::constant_lambda(0.05, 0.001, 0.03, v);
            assert!(((sol.lambda - exact) / exact).abs() < 0.01, "V={v}: {} vs {exact}", sol.lambda);
            let u = sol.u_vec.unwrap();
            assert!((d.grid().integrate(&u) - 1.0).abs() < 1e-12);
            assert!(u.iter().all(|&e| e >= 0.0));
            assert!(sol.residual <= sol.tolerance);
        }
    }

    #[test]
    fn zero_monomer_uses_moment_identity() {
        let d = disc(&constant(), 16.0, 100);
        let sol = principal_eigenpair(&d, 0.0, &EigenOptions::default()).unwrap();
        assert_eq!(sol.lambda, 0.05);
        assert!(sol.u_vec.is_none());
    }

    #[test]
    fn agrees_with_dense_eigendecomposition() {
        let mut c = constant();
        c.tau = CoefficientShape::Bell {
            tau0: 0.001,
            amplitude: 0.01,
            center: 2.0,
            sigma: 0.1f64.sqrt(),
        };
        let d = disc(&c, 16.0, 120);
        for v in [5.0, 80.0, 600.0] {
            let sol = principal_eigenpair(&d, v, &EigenOptions::default()).unwrap();
            let dense = dense_growth_rate(&d, v).unwrap();
            assert!((sol.growth_rate() - dense).abs() < 1e-9, "{v}: {} vs {dense}", sol.growth_rate());
        }
    }

    #[test]
    fn adjoint_eigenvalue_matches_primal() {
        let d = disc(&constant(), 30.0, 300);
        let sol = eigenpair_with_adjoint(&d, 600.0, &EigenOptions::default()).unwrap();
        let la = sol.lambda_adjoint.unwrap();
        assert!(((la - sol.lambda) / sol.lambda).abs() < 1e-8);
        let phi = sol.phi_vec.as_ref().unwrap();
        assert!(phi.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn residual_log_is_nonincreasing() {
        let d = disc(&constant(), 50.0 / 3.0, 400);
        let sol = principal_eigenpair(&d, 600.0, &EigenOptions::default()).unwrap();
        for w in sol.residual_log.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{:?}", sol.residual_log);
        }
    }

    #[test]
    fn all_rates_zero_gives_zero() {
        let c = CoefficientSet {
            lambda: 1.0,
            gamma: 1.0,
            x0: 0.0,
            tau: CoefficientShape::Constant { value: 0.0 },
            beta: CoefficientShape::Constant { value: 0.0 },
            mu: CoefficientShape::Constant { value: 0.0 },
            kernel: Default::default(),
        };
        let d = disc(&c, 10.0, 20);
        let u = vec![0.1; 20];
        let sol = EigenSolution {
            v: 5.0,
            lambda: 0.0,
            u_vec: Some(u),
            phi_vec: None,
            phi_normalization: PhiNormalization::UnitAtX0,
            phi_pairing: None,
            lambda_adjoint: None,
            residual: 0.0,
            adjoint_residual: None,
            tolerance: 0.0,
            iterations: 0,
            residual_log: vec![],
            truncation_outflow: 0.0,
        };
        let m = eigenvalue_from_moments(&sol, &d).unwrap();
        assert_eq!(m.number_route, 0.0);
        assert_eq!(m.mass_route, 0.0);
    }

    #[test]
    fn closed_forms() {
        assert!((closed_form::adjoint_length(0.001, 0.03, 600.0) - 20f64.sqrt()).abs() < 1e-12);
        assert!((closed_form::constant_v_inf(0.05, 0.001, 0.03) - 250.0 / 3.0).abs() < 1e-9);
        let l = closed_form::affine_lambda(0.05, 0.01, 0.03, 0.001, 0.0005, 100.0);
        let z = l - 0.05;
        assert!(((z + 0.01) * (z + 0.05) - 0.003).abs() < 1e-15);
        assert!(z < -0.05);
        assert!((l + 0.03831).abs() < 1e-5);
    }
}
