//! Discrete fragment-repartition weights.
//!
//! Column `j` describes where the two fragments of a parent in cell `j` land.
//! Weights start from the midpoint rule `h_i / y_j` on the strictly smaller
//! cells and are then corrected by an affine factor `c_j + b_j x_i` chosen
//! so that both moment laws hold exactly on the grid:
//!
//! ```text
//! Σ_i W_ij = ∫ κ(x, y_j) dx        Σ_i x_i W_ij = ∫ x κ(x, y_j) dx
//! ```
//!
//! (integrals over `[x0, y_j)`). Columns too close to `x0` for both laws to be
//! met with nonnegative weights keep the number law and hand the missing
//! first moment to the monomer pool; columns with no smaller cell do not
//! fragment at all.

use crate::coefficients::Kernel;
use crate::grid::SizeGrid;

/// How a column's weights were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    /// No admissible smaller cell: the parent cell does not fragment.
    Inert,
    /// Both moment laws met by the affine correction.
    MomentMatched,
    /// Number law met by scaling; first-moment deficit returned to monomers.
    Scaled,
}

/// Per-column affine weight table `W_ij = (h_i / y_j)(c_j + b_j x_i)` for `i < j`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    kind: Vec<ColumnKind>,
    c: Vec<f64>,
    b: Vec<f64>,
    /// First moment (per fragment pair, halved) that leaves the polymer grid.
    returned: Vec<f64>,
    widths: Vec<f64>,
    centers: Vec<f64>,
}

impl KernelWeights {
    pub fn new(kernel: Kernel, grid: &SizeGrid) -> Self {
        let n = grid.len();
        let x = grid.centers();
        let h = grid.widths();
        let x0 = grid.x0();
        let mut kind = vec![ColumnKind::Inert; n];
        let mut c = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut returned = vec![0.0; n];

        for j in 0..n {
            let y = x[j];
            if y <= x0 {
                continue;
            }
            // admissible cells: i < j (then x_i < y automatically)
            let m = j;
            if m == 0 {
                continue;
            }
            let t0 = kernel.number_integral(x0, y, y);
            let t1 = kernel.moment_integral(x0, y, y);
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for i in 0..m {
                let w = h[i] / y;
                s0 += w;
                s1 += w * x[i];
                s2 += w * x[i] * x[i];
            }
            let full_moment = 0.5 * y;

            if m >= 2 {
                let det = s0 * s2 - s1 * s1;
                if det > 0.0 {
                    let cj = (t0 * s2 - t1 * s1) / det;
                    let bj = (s0 * t1 - s1 * t0) / det;
                    let lo = cj + bj * x[0];
                    let hi = cj + bj * x[m - 1];
                    if lo >= 0.0 && hi >= 0.0 {
                        kind[j] = ColumnKind::MomentMatched;
                        c[j] = cj;
                        b[j] = bj;
                        returned[j] = full_moment - t1;
                        continue;
                    }
                }
            }
            let cj = t0 / s0;
            let deficit = full_moment - cj * s1;
            if deficit >= 0.0 {
                kind[j] = ColumnKind::Scaled;
                c[j] = cj;
                returned[j] = deficit;
            }
        }
        // x0 = 0 matched columns: returned is exactly zero up to rounding
        for (r, k) in returned.iter_mut().zip(&kind) {
            if *k == ColumnKind::MomentMatched && x0 == 0.0 {
                *r = 0.0;
            }
        }
        Self {
            kind,
            c,
            b,
            returned,
            widths: h.to_vec(),
            centers: x.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn column_kind(&self, j: usize) -> ColumnKind {
        self.kind[j]
    }

    /// Whether parents in cell `j` fragment at all.
    pub fn is_active(&self, j: usize) -> bool {
        self.kind[j] != ColumnKind::Inert
    }

    /// First moment per fragmentation event (already halved) returned to monomers.
    pub fn returned_moment(&self, j: usize) -> f64 {
        self.returned[j]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i >= j || !self.is_active(j) {
            return 0.0;
        }
        self.widths[i] / self.centers[j] * (self.c[j] + self.b[j] * self.centers[i])
    }

    /// Dense copy of the table, `table[i][j] = W_ij`.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.weight(i, j)).collect())
            .collect()
    }

    /// Adds the fragment gain density `2 Σ_{j>i} W_ij f_j / h_i` to `out`,
    /// where `f_j = β_j u_j h_j` is the fragmentation event rate of cell `j`.
    ///
    /// Runs in O(n) using suffix sums of the affine column factors.
    pub fn add_gain(&self, events: &[f64], out: &mut [f64]) {
        let n = self.len();
        let (mut sum_c, mut sum_b) = (0.0, 0.0);
        for i in (0..n).rev() {
            out[i] += 2.0 * (sum_c + self.centers[i] * sum_b);
            if self.is_active(i) {
                let f = events[i] / self.centers[i];
                sum_c += self.c[i] * f;
                sum_b += self.b[i] * f;
            }
        }
    }

    /// Adjoint of [`add_gain`](Self::add_gain) w.r.t. `⟨a, b⟩ = Σ a_i b_i h_i`:
    /// adds `2 Σ_{i<j} W_ij φ_i` to `out[j]` (caller multiplies by β_j).
    pub fn add_gain_adjoint(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.len();
        let (mut p0, mut p1) = (0.0, 0.0);
        for j in 0..n {
            if self.is_active(j) {
                out[j] += 2.0 * (self.c[j] * p0 + self.b[j] * p1) / self.centers[j];
            }
            p0 += self.widths[j] * phi[j];
            p1 += self.widths[j] * self.centers[j] * phi[j];
        }
    }
}
