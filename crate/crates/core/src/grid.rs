//! Truncated, discretized size axis.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Cell-width progression of a [`SizeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Each cell is `ratio` times wider than its left neighbour.
    Geometric(f64),
}

/// Finite-volume grid on `[x0, xmax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    x0: f64,
    xmax: f64,
    spacing: Spacing,
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl SizeGrid {
    pub fn new(x0: f64, xmax: f64, n: usize, spacing: Spacing) -> Result<Self> {
        if n < 3 {
            return Err(ModelError::InvalidGrid(format!("need at least 3 cells, got {n}")));
        }
        if !(x0.is_finite() && xmax.is_finite() && x0 >= 0.0 && xmax > x0) {
            return Err(ModelError::InvalidGrid(format!(
                "need 0 <= x0 < xmax, got x0 = {x0}, xmax = {xmax}"
            )));
        }
        let span = xmax - x0;
        let mut edges = Vec::with_capacity(n + 1);
        match spacing {
            Spacing::Uniform => {
                let h = span / n as f64;
                edges.extend((0..=n).map(|i| x0 + i as f64 * h));
            }
            Spacing::Geometric(ratio) => {
                if !(ratio.is_finite() && ratio >= 1.0) {
                    return Err(ModelError::InvalidGrid(format!(
                        "geometric ratio must be >= 1, got {ratio}"
                    )));
                }
                // w_k = w_0 r^k, Σ w_k = span
                let total: f64 = (0..n).map(|k| ratio.powi(k as i32)).sum();
                let w0 = span / total;
                let mut acc = 0.0;
                edges.push(x0);
                for k in 0..n {
                    acc += w0 * ratio.powi(k as i32);
                    edges.push(x0 + acc);
                }
            }
        }
        edges[n] = xmax;
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if widths.iter().any(|&w| w <= 0.0) {
            return Err(ModelError::InvalidGrid("degenerate cell width".into()));
        }
        Ok(Self {
            x0,
            xmax,
            spacing,
            edges,
            centers,
            widths,
        })
    }

    pub fn uniform(x0: f64, xmax: f64, n: usize) -> Result<Self> {
        Self::new(x0, xmax, n, Spacing::Uniform)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Cell boundaries, `len() + 1` entries.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Largest cell width.
    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    /// Distance between consecutive centers; the last entry is the last cell width.
    pub fn center_gaps(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.centers[i + 1] - self.centers[i]
                } else {
                    self.widths[i]
                }
            })
            .collect()
    }

    /// Σ f_i h_i.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.widths).map(|(a, h)| a * h).sum()
    }

    /// Σ g_i f_i h_i.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.widths)
            .map(|((a, b), h)| a * b * h)
            .sum()
    }

    /// Cell averages of `f` by the midpoint rule.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.centers.iter().map(|&x| f(x)).collect()
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn locate(&self, x: f64) -> usize {
        match self
            .edges
            .binary_search_by(|e| e.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.len() - 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_sum_to_span() {
        for spacing in [Spacing::Uniform, Spacing::Geometric(1.01), Spacing::Geometric(1.0)] {
            for n in [50, 200, 800] {
                let g = SizeGrid::new(0.5, 20.0, n, spacing).unwrap();
                let total: f64 = g.widths().iter().sum();
                assert!(((total - 19.5) / 19.5).abs() < 1e-12);
                assert!(g.centers().windows(2).all(|w| w[0] < w[1]));
                assert!(g.centers()[0] >= 0.5 && g.centers()[n - 1] <= 20.0);
            }
        }
    }

    #[test]
    fn geometric_cells_grow() {
        let g = SizeGrid::new(0.0, 100.0, 100, Spacing::Geometric(1.03)).unwrap();
        let w = g.widths();
        assert!((w[50] / w[49] - 1.03).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SizeGrid::uniform(1.0, 1.0, 10).is_err());
        assert!(SizeGrid::uniform(0.0, 1.0, 2).is_err());
        assert!(SizeGrid::new(0.0, 1.0, 10, Spacing::Geometric(0.5)).is_err());
    }

    #[test]
    fn locate_finds_cells() {
        let g = SizeGrid::uniform(0.0, 10.0, 10).unwrap();
        assert_eq!(g.locate(0.0), 0);
        assert_eq!(g.locate(3.5), 3);
        assert_eq!(g.locate(10.0), 9);
        assert_eq!(g.locate(42.0), 9);
    }
}
