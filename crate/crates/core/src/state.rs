use std::sync::Arc;

use crate::error::{ModelError, Result};
use crate::grid::SizeGrid;

/// Monomer level and polymer density at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymerState {
    /// Monomer quantity V.
    pub v: f64,
    /// Cell-average polymer density.
    pub u: Vec<f64>,
    pub t: f64,
    grid: Arc<SizeGrid>,
}

impl PolymerState {
    pub fn new(grid: Arc<SizeGrid>, v: f64, u: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(ModelError::Domain(format!(
                "density has {} cells, grid has {}",
                u.len(),
                grid.len()
            )));
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ModelError::NegativeMonomer(v));
        }
        if let Some((index, &value)) = u
            .iter()
            .enumerate()
            .find(|(_, &x)| !(x >= 0.0 && x.is_finite()))
        {
            return Err(ModelError::PositivityViolation {
                what: "polymer density",
                index,
                value,
            });
        }
        Ok(Self { v, u, t, grid })
    }

    /// State with density `f` sampled at cell centers.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<SizeGrid>, v: f64, f: F) -> Result<Self> {
        let u = grid.sample(f);
        Self::new(grid, v, u, 0.0)
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    /// Total polymer count U = Σ u_i h_i.
    pub fn moment0(&self) -> f64 {
        self.grid.integrate(&self.u)
    }

    /// Polymerized mass P = Σ x_i u_i h_i.
    pub fn moment1(&self) -> f64 {
        self.grid.inner(&self.u, self.grid.centers())
    }

    /// (U, P).
    pub fn moments(&self) -> (f64, f64) {
        (self.moment0(), self.moment1())
    }

    /// Center of mass P/U, `None` for the zero density.
    pub fn mean_size(&self) -> Option<f64> {
        let (u, p) = self.moments();
        (u > 0.0).then(|| p / u)
    }
}

/// The inoculum shape 0.5 x²/(1 + x⁴).
pub fn inoculum_profile(x: f64) -> f64 {
    let x2 = x * x;
    0.5 * x2 / (1.0 + x2 * x2)
}
