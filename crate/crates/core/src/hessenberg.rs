//! LU factorization of upper Hessenberg matrices with adjacent-row pivoting.
//!
//! O(n²) to factor and O(n²) per solve; supports solves with the transpose.

/// Factors of a dense row-major upper Hessenberg matrix.
#[derive(Debug, Clone)]
pub struct HessenbergLu {
    n: usize,
    /// Upper triangular factor, row-major.
    upper: Vec<f64>,
    /// Multiplier of elimination step `k` (row k+1 −= m·row k).
    multipliers: Vec<f64>,
    /// Whether rows `k` and `k+1` were swapped before step `k`.
    swapped: Vec<bool>,
}

impl HessenbergLu {
    /// Factors `a` (consumed). Returns `None` if a zero pivot is met.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut multipliers = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let row_k = &mut top[k * n..];
            let row_k1 = &mut bottom[..n];
            if row_k1[k].abs() > row_k[k].abs() {
                row_k[k..].swap_with_slice(&mut row_k1[k..]);
                swapped[k] = true;
            }
            let pivot = row_k[k];
            if pivot == 0.0 {
                return None;
            }
            let m = row_k1[k] / pivot;
            multipliers[k] = m;
            row_k1[k] = 0.0;
            for j in k + 1..n {
                row_k1[j] -= m * row_k[j];
            }
        }
        if a[n * n - 1] == 0.0 {
            return None;
        }
        Some(Self {
            n,
            upper: a,
            multipliers,
            swapped,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                b.swap(k, k + 1);
            }
            b[k + 1] -= self.multipliers[k] * b[k];
        }
        for i in (0..n).rev() {
            let row = &self.upper[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&b[i + 1..]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Aᵀ y = c` in place.
    pub fn solve_transpose(&self, c: &mut [f64]) {
        let n = self.n;
        // Uᵀ z = c, column-oriented forward substitution
        for i in 0..n {
            c[i] /= self.upper[i * n + i];
            let zi = c[i];
            let row = &self.upper[i * n..(i + 1) * n];
            for j in i + 1..n {
                c[j] -= row[j] * zi;
            }
        }
        // y = E_0ᵀ ⋯ E_{n−2}ᵀ z
        for k in (0..n.saturating_sub(1)).rev() {
            c[k] -= self.multipliers[k] * c[k + 1];
            if self.swapped[k] {
                c.swap(k, k + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hessenberg(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i <= j + 1 {
                    a[i * n + j] = ((i * 31 + j * 17) % 23) as f64 / 7.0 - 1.3;
                }
            }
            a[i * n + i] += 0.1;
        }
        a
    }

    fn matvec(a: &[f64], x: &[f64], n: usize, transpose: bool) -> Vec<f64> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if transpose { a[j * n + i] } else { a[i * n + j] } * x[j])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn solves_both_orientations() {
        let n = 40;
        let a = hessenberg(n);
        let lu = HessenbergLu::factor(a.clone(), n).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let mut b = matvec(&a, &x, n, false);
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-9, "{i}: {} vs {}", b[i], x[i]);
        }
        let mut c = matvec(&a, &x, n, true);
        lu.solve_transpose(&mut c);
        for i in 0..n {
            assert!((c[i] - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![0.0; 9];
        assert!(HessenbergLu::factor(a, 3).is_none());
    }
}
