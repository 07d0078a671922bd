//! Model coefficients: the size-dependent rates τ, β, μ, the fragment
//! kernel κ and the monomer scalars λ, γ, x₀.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::grid::SizeGrid;

/// Analytic profile of a size-dependent rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientShape {
    /// `value` everywhere.
    Constant { value: f64 },
    /// `c0 + c1·x`.
    Affine { c0: f64, c1: f64 },
    /// `tau0 + amplitude·exp(−(x − center)²/sigma²)`.
    Bell {
        tau0: f64,
        amplitude: f64,
        center: f64,
        sigma: f64,
    },
    /// `tau0 + alpha·g(alpha·(x − center))` with `g` the standard normal density.
    ScaledBell { tau0: f64, alpha: f64, center: f64 },
}

fn std_normal(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl CoefficientShape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Affine { c0, c1 } => c0 + c1 * x,
            Self::Bell {
                tau0,
                amplitude,
                center,
                sigma,
            } => {
                let d = (x - center) / sigma;
                tau0 + amplitude * (-d * d).exp()
            }
            Self::ScaledBell {
                tau0,
                alpha,
                center,
            } => tau0 + alpha * std_normal(alpha * (x - center)),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Affine { c1, .. } => c1,
            Self::Bell {
                amplitude,
                center,
                sigma,
                ..
            } => {
                let s2 = sigma * sigma;
                let d = x - center;
                -2.0 * amplitude * d / s2 * (-d * d / s2).exp()
            }
            Self::ScaledBell { alpha, center, .. } => {
                let z = alpha * (x - center);
                -alpha * alpha * z * std_normal(z)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { .. } | Self::Affine { .. } => 0.0,
            Self::Bell {
                amplitude,
                center,
                sigma,
                ..
            } => {
                let s2 = sigma * sigma;
                let d = x - center;
                amplitude * (4.0 * d * d / (s2 * s2) - 2.0 / s2) * (-d * d / s2).exp()
            }
            Self::ScaledBell { alpha, center, .. } => {
                let z = alpha * (x - center);
                alpha.powi(3) * (z * z - 1.0) * std_normal(z)
            }
        }
    }

    /// Global infimum of the second derivative over the real line.
    ///
    /// For the bell shapes this is attained at the peak.
    pub fn min_second_derivative(&self) -> f64 {
        match *self {
            Self::Constant { .. } | Self::Affine { .. } => 0.0,
            Self::Bell {
                amplitude, sigma, ..
            } => (-2.0 * amplitude / (sigma * sigma)).min(0.0),
            Self::ScaledBell { alpha, .. } => -alpha.powi(3) / (2.0 * PI).sqrt(),
        }
    }

    /// Returns the value if the shape does not depend on `x`.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Self::Constant { value } => Some(value),
            Self::Affine { c0, c1 } if c1 == 0.0 => Some(c0),
            _ => None,
        }
    }

    fn check_parameters(&self, name: &'static str) -> Result<()> {
        let bad = |reason: &str| ModelError::InvalidParameter {
            name,
            reason: reason.to_string(),
        };
        match *self {
            Self::Constant { value } if !value.is_finite() => Err(bad("value must be finite")),
            Self::Affine { c0, c1 } if !(c0.is_finite() && c1.is_finite()) => {
                Err(bad("coefficients must be finite"))
            }
            Self::Bell { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(bad("bell width sigma must be positive"))
            }
            Self::ScaledBell { alpha, .. } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(bad("scaled bell alpha must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Fragment repartition kernel κ(x, y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// κ(x, y) = 1/y on 0 < x < y, zero when y ≤ x₀.
    #[default]
    Uniform,
}

impl Kernel {
    /// Exact ∫ κ(x, y) dx over [a, b] ∩ (0, y).
    pub fn number_integral(&self, a: f64, b: f64, y: f64) -> f64 {
        let b = b.min(y);
        if b <= a {
            0.0
        } else {
            (b - a) / y
        }
    }

    /// Exact ∫ x κ(x, y) dx over [a, b] ∩ (0, y).
    pub fn moment_integral(&self, a: f64, b: f64, y: f64) -> f64 {
        let b = b.min(y);
        if b <= a {
            0.0
        } else {
            0.5 * (b * b - a * a) / y
        }
    }
}

/// Full coefficient set of the monomer/polymer system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    /// Monomer synthesis rate λ.
    pub lambda: f64,
    /// Monomer degradation rate γ.
    pub gamma: f64,
    /// Minimal polymer size x₀.
    #[serde(default)]
    pub x0: f64,
    /// Conversion rate τ(x).
    pub tau: CoefficientShape,
    /// Fragmentation rate β(x).
    pub beta: CoefficientShape,
    /// Polymer degradation rate μ(x).
    pub mu: CoefficientShape,
    #[serde(default)]
    pub kernel: Kernel,
}

/// τ, β, μ evaluated at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCoefficients {
    pub tau: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl CoefficientSet {
    /// The constant-coefficient configuration: τ ≡ τ₀, β(x) = β₀x, μ ≡ μ₀.
    pub fn constant(lambda: f64, gamma: f64, tau0: f64, beta0: f64, mu0: f64) -> Self {
        Self {
            lambda,
            gamma,
            x0: 0.0,
            tau: CoefficientShape::Constant { value: tau0 },
            beta: CoefficientShape::Affine { c0: 0.0, c1: beta0 },
            mu: CoefficientShape::Constant { value: mu0 },
            kernel: Kernel::Uniform,
        }
    }

    /// Disease-free monomer level V̄ = λ/γ.
    pub fn vbar(&self) -> f64 {
        self.lambda / self.gamma
    }

    /// Checks the scalar invariants (λ ≥ 0, γ > 0, x₀ ≥ 0) and shape parameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "lambda",
                reason: format!("must be finite and >= 0, got {}", self.lambda),
            });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and > 0, got {}", self.gamma),
            });
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "x0",
                reason: format!("must be finite and >= 0, got {}", self.x0),
            });
        }
        self.tau.check_parameters("tau")?;
        self.beta.check_parameters("beta")?;
        self.mu.check_parameters("mu")?;
        Ok(())
    }

    /// Evaluates τ, β, μ at the grid's cell centers.
    ///
    /// Fails on the first negative sample, naming the function and location.
    pub fn sample(&self, grid: &SizeGrid) -> Result<SampledCoefficients> {
        self.validate()?;
        let centers = grid.centers();
        let eval = |shape: &CoefficientShape, name: &'static str| -> Result<Vec<f64>> {
            centers
                .iter()
                .map(|&x| {
                    let value = shape.eval(x);
                    if value < 0.0 || !value.is_finite() {
                        Err(ModelError::NegativeCoefficient {
                            function: name,
                            x,
                            value,
                        })
                    } else {
                        Ok(value)
                    }
                })
                .collect()
        };
        Ok(SampledCoefficients {
            tau: eval(&self.tau, "tau")?,
            beta: eval(&self.beta, "beta")?,
            mu: eval(&self.mu, "mu")?,
        })
    }

    /// Default truncation bound: ten times the constant-coefficient mean
    /// equilibrium size μ₀/β₀, using μ at x₀ and the slope (or level) of β.
    pub fn default_xmax(&self) -> f64 {
        let mu0 = self.mu.eval(self.x0);
        let beta_slope = match self.beta {
            CoefficientShape::Affine { c1, .. } if c1 > 0.0 => c1,
            other => other.eval(1.0),
        };
        let span = 10.0 * mu0 / beta_slope;
        if span.is_finite() && span > 0.0 {
            self.x0 + span
        } else {
            self.x0 + 10.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Spacing;

    #[test]
    fn constant_mu_samples_exactly() {
        let c = CoefficientSet::constant(2400.0, 4.0, 0.001, 0.03, 0.05);
        let g = SizeGrid::new(0.0, 10.0, 37, Spacing::Uniform).unwrap();
        let s = c.sample(&g).unwrap();
        assert!(s.mu.iter().all(|&m| m == 0.05));
        assert_eq!(s.tau.len(), 37);
    }

    #[test]
    fn affine_beta_at_two() {
        let beta = CoefficientShape::Affine { c0: 0.0, c1: 0.03 };
        assert!((beta.eval(2.0) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn bell_peak_is_basal_plus_amplitude() {
        let tau = CoefficientShape::Bell {
            tau0: 0.001,
            amplitude: 0.01,
            center: 2.0,
            sigma: 0.1f64.sqrt(),
        };
        assert!((tau.eval(2.0) - 0.011).abs() < 1e-15);
        // exp(-10 (x-2)^2) form
        let x = 2.3;
        let expected = 0.001 + 0.01 * (-10.0 * 0.09f64).exp();
        assert!((tau.eval(x) - expected).abs() < 1e-15);
        assert!((tau.min_second_derivative() + 2.0 * 0.01 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let shapes = [
            CoefficientShape::Bell {
                tau0: 0.001,
                amplitude: 0.05,
                center: 1.3,
                sigma: 0.4,
            },
            CoefficientShape::ScaledBell {
                tau0: 0.001,
                alpha: 0.7,
                center: 2.0,
            },
            CoefficientShape::Affine { c0: 0.2, c1: -0.1 },
        ];
        let h = 1e-4;
        for s in shapes {
            for &x in &[0.3, 1.1, 1.3, 2.9] {
                let d1 = (s.eval(x + h) - s.eval(x - h)) / (2.0 * h);
                let d2 = (s.eval(x + h) - 2.0 * s.eval(x) + s.eval(x - h)) / (h * h);
                assert!((s.derivative(x) - d1).abs() < 1e-7, "{s:?} {x}");
                assert!((s.second_derivative(x) - d2).abs() < 1e-5, "{s:?} {x}");
            }
        }
    }

    #[test]
    fn scaled_bell_has_unit_excess_mass() {
        let s = CoefficientShape::ScaledBell {
            tau0: 0.0,
            alpha: 0.3,
            center: 5.0,
        };
        let n = 200_000;
        let (a, b) = (-60.0, 70.0);
        let h = (b - a) / n as f64;
        let total: f64 = (0..n).map(|i| s.eval(a + (i as f64 + 0.5) * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_coefficient_is_reported() {
        let mut c = CoefficientSet::constant(1.0, 1.0, 0.001, 0.03, 0.05);
        c.mu = CoefficientShape::Affine { c0: 0.1, c1: -0.1 };
        let g = SizeGrid::new(0.0, 4.0, 8, Spacing::Uniform).unwrap();
        match c.sample(&g) {
            Err(ModelError::NegativeCoefficient { function, x, .. }) => {
                assert_eq!(function, "mu");
                assert!(x > 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_invariants() {
        let mut c = CoefficientSet::constant(1.0, 1.0, 0.001, 0.03, 0.05);
        c.gamma = 0.0;
        assert!(matches!(
            c.validate(),
            Err(ModelError::InvalidParameter { name: "gamma", .. })
        ));
    }

    #[test]
    fn kernel_integrals_satisfy_moment_laws() {
        let k = Kernel::Uniform;
        let y = 3.7;
        assert!((k.number_integral(0.0, 10.0, y) - 1.0).abs() < 1e-15);
        assert!((k.moment_integral(0.0, 10.0, y) - y / 2.0).abs() < 1e-15);
    }
}
