//! Quadrature rules on the equispaced grid `t_j = πj/n`, `j = 0..2n`.
//!
//! Three rules are provided: the trapezoid rule for smooth periodic
//! integrands, the Kress rule for integrands with a `ln(4 sin²((t-τ)/2))`
//! factor, and the cotangent rule for the finite-part integral
//! `(1/2π) ∫ cot((τ-t)/2) f'(τ) dτ`.

use std::f64::consts::PI;

/// The equispaced node grid with `2n` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureGrid {
    pub n: usize,
}

impl QuadratureGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature grid needs n >= 1");
        Self { n }
    }

    pub fn len(&self) -> usize {
        2 * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        PI * j as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Trapezoid weight `π/n`.
    pub fn weight(&self) -> f64 {
        PI / self.n as f64
    }
}

/// Kress weights `R_j(t) = -(2π/n) Σ_{m=1}^{n-1} cos(m(t-t_j))/m - (π/n²) cos(n(t-t_j))`.
pub fn log_weights(n: usize, t: f64) -> Vec<f64> {
    let grid = QuadratureGrid::new(n);
    let nf = n as f64;
    (0..grid.len())
        .map(|j| {
            let s = t - grid.node(j);
            let sum: f64 = (1..n).map(|m| (m as f64 * s).cos() / m as f64).sum();
            -2.0 * PI / nf * sum - PI / (nf * nf) * (nf * s).cos()
        })
        .collect()
}

/// Cotangent weights `T_j(t) = -(1/n) Σ_{m=1}^{n-1} m cos(m(t-t_j)) - ½ cos(n(t-t_j))`.
pub fn hypersingular_weights(n: usize, t: f64) -> Vec<f64> {
    let grid = QuadratureGrid::new(n);
    let nf = n as f64;
    (0..grid.len())
        .map(|j| {
            let s = t - grid.node(j);
            let sum: f64 = (1..n).map(|m| m as f64 * (m as f64 * s).cos()).sum();
            -sum / nf - 0.5 * (nf * s).cos()
        })
        .collect()
}

/// `(π/n) Σ values`, with `2n = values.len()`.
pub fn trapezoid<T>(values: &[T]) -> T
where
    T: Copy + std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
{
    assert!(values.len() % 2 == 0, "trapezoid rule needs 2n samples");
    let n = values.len() / 2;
    values.iter().copied().sum::<T>() * (PI / n as f64)
}

/// Weight rows evaluated at the node `t_0`. Since the weights at `t_i` depend
/// only on `(i - j) mod 2n`, the full matrices are `row[(i + 2n - j) % 2n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub n: usize,
    pub log: Vec<f64>,
    pub hypersingular: Vec<f64>,
}

impl WeightTable {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            log: log_weights(n, 0.0),
            hypersingular: hypersingular_weights(n, 0.0),
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        (i + 2 * self.n - j) % (2 * self.n)
    }

    #[inline]
    pub fn log_at(&self, i: usize, j: usize) -> f64 {
        self.log[self.index(i, j)]
    }

    #[inline]
    pub fn hypersingular_at(&self, i: usize, j: usize) -> f64 {
        self.hypersingular[self.index(i, j)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn n1_log_weights() {
        let r = log_weights(1, 0.0);
        assert!((r[0] + PI).abs() < 1e-15);
        assert!((r[1] - PI).abs() < 1e-15);
        let applied: f64 = r.iter().zip([0.0, PI]).map(|(w, t)| w * t.cos()).sum();
        assert!((applied + 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn log_rule_on_cosines() {
        for n in [8, 16, 32] {
            let grid = QuadratureGrid::new(n);
            for i in [0, 3, n] {
                let t = grid.node(i);
                let w = log_weights(n, t);
                for m in 1..n {
                    let got: f64 = (0..grid.len())
                        .map(|j| w[j] * (m as f64 * grid.node(j)).cos())
                        .sum();
                    let want = -2.0 * PI / m as f64 * (m as f64 * t).cos();
                    assert!((got - want).abs() < 1e-11, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn log_rule_against_brute_force_integral() {
        // ∫ ln(4 sin²((t-τ)/2)) e^{cos τ} dτ, with the singularity removed by a substitution
        // τ = t + 2π u² on each side and a fine midpoint rule.
        let t = 0.7;
        let f = |tau: f64| tau.cos().exp();
        let w = log_weights(32, t);
        let grid = QuadratureGrid::new(32);
        let got: f64 = (0..64).map(|j| w[j] * f(grid.node(j))).sum();
        let steps = 400_000;
        let mut want = 0.0;
        for s in 0..steps {
            let u = (s as f64 + 0.5) / steps as f64;
            let h = PI * u * u;
            let jac = 2.0 * PI * u / steps as f64;
            let lg = (4.0 * (h / 2.0).sin().powi(2)).ln();
            want += lg * (f(t + h) + f(t - h)) * jac;
        }
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn hypersingular_rule_on_cosines() {
        for n in [8, 16, 32] {
            let grid = QuadratureGrid::new(n);
            for i in 0..grid.len() {
                let t = grid.node(i);
                let w = hypersingular_weights(n, t);
                assert!(w.iter().sum::<f64>().abs() < 1e-11);
                for m in 1..n {
                    let got: f64 = (0..grid.len())
                        .map(|j| w[j] * (m as f64 * grid.node(j)).cos())
                        .sum();
                    assert!((got + m as f64 * (m as f64 * t).cos()).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn trapezoid_examples() {
        assert!((trapezoid(&vec![1.0; 32]) - 2.0 * PI).abs() < 1e-14);
        let cos: Vec<f64> = QuadratureGrid::new(4).nodes().iter().map(|t| t.cos()).collect();
        assert!(trapezoid(&cos).abs() < 1e-14);
        let esin = |n: usize| {
            trapezoid(&QuadratureGrid::new(n).nodes().iter().map(|t| t.sin().exp()).collect::<Vec<_>>())
        };
        assert!((esin(32) - esin(64)).abs() < 1e-12);
    }

    #[test]
    fn table_is_translation_invariant() {
        let n = 16;
        let table = WeightTable::new(n);
        let grid = QuadratureGrid::new(n);
        for i in [0, 5, 17, 31] {
            let r = log_weights(n, grid.node(i));
            let h = hypersingular_weights(n, grid.node(i));
            for j in 0..grid.len() {
                assert!((r[j] - table.log_at(i, j)).abs() < 1e-13);
                assert!((h[j] - table.hypersingular_at(i, j)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_annihilate_constants(n in 1usize..40, t in 0.0..(2.0 * PI)) {
            prop_assert!(log_weights(n, t).iter().sum::<f64>().abs() < 1e-11);
            prop_assert!(hypersingular_weights(n, t).iter().sum::<f64>().abs() < 1e-10);
        }
    }
}
