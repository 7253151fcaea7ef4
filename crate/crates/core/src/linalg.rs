//! Dense complex LU factorization with partial pivoting.
//!
//! Works in place on column-major storage so the inner update loop runs
//! over contiguous memory. Also provides adjoint solves and a 1-norm
//! condition estimate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Systems whose estimated 1-norm condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    /// Column-major `L\U` with unit lower triangle implied.
    lu: Vec<Complex64>,
    /// Row swapped with row `k` at step `k`.
    pivots: Vec<usize>,
    norm1: f64,
    condition: f64,
}

#[inline]
fn abs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

impl LuFactorization {
    /// Factorizes a square matrix; fails if it is singular to working precision.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let lu = Self::factor_unchecked(matrix)?;
        if !(lu.condition <= MAX_CONDITION) {
            return Err(Error::Singular {
                condition: lu.condition,
            });
        }
        Ok(lu)
    }

    /// Factorizes without rejecting ill-conditioned matrices (exactly singular ones still fail).
    pub fn factor_unchecked(matrix: DMatrix<Complex64>) -> Result<Self> {
        let (n, m) = matrix.shape();
        if n != m {
            return Err(Error::Input(format!("LU needs a square matrix, got {n}x{m}")));
        }
        let norm1 = (0..n)
            .map(|j| matrix.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut a: Vec<Complex64> = matrix.as_slice().to_vec();
        let mut pivots = vec![0; n];
        for k in 0..n {
            let col = &a[k * n..(k + 1) * n];
            let (p, pmax) = (k..n)
                .map(|i| (i, abs1(col[i])))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > 0.0) {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            pivots[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(j * n + k, j * n + p);
                }
            }
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let colk = &mut head[k * n..];
            let inv = colk[k].inv();
            for v in &mut colk[k + 1..] {
                *v *= inv;
            }
            let below = &colk[k + 1..];
            for colj in tail.chunks_exact_mut(n) {
                let f = colj[k];
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                for (x, l) in colj[k + 1..].iter_mut().zip(below) {
                    *x -= f * l;
                }
            }
        }
        let mut lu = Self {
            n,
            lu: a,
            pivots,
            norm1,
            condition: f64::NAN,
        };
        lu.condition = lu.norm1 * lu.inverse_norm1_estimate();
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Estimated 1-norm condition number.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.lu[j * self.n + i]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for (k, &p) in self.pivots.iter().enumerate() {
            b.swap(k, p);
        }
        for k in 0..n {
            let xk = b[k];
            if xk.re == 0.0 && xk.im == 0.0 {
                continue;
            }
            let col = &self.lu[k * n..(k + 1) * n];
            for (x, l) in b[k + 1..].iter_mut().zip(&col[k + 1..]) {
                *x -= xk * l;
            }
        }
        for k in (0..n).rev() {
            let col = &self.lu[k * n..(k + 1) * n];
            b[k] /= col[k];
            let xk = b[k];
            for (x, u) in b[..k].iter_mut().zip(&col[..k]) {
                *x -= xk * u;
            }
        }
    }

    /// Solves `Aᴴ x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let col = &self.lu[k * n..(k + 1) * n];
            let mut s = b[k];
            for (x, u) in b[..k].iter().zip(&col[..k]) {
                s -= u.conj() * x;
            }
            b[k] = s / col[k].conj();
        }
        for k in (0..n).rev() {
            let col = &self.lu[k * n..(k + 1) * n];
            let mut s = b[k];
            for (x, l) in b[k + 1..].iter().zip(&col[k + 1..]) {
                s -= l.conj() * x;
            }
            b[k] = s;
        }
        for (k, &p) in self.pivots.iter().enumerate().rev() {
            b.swap(k, p);
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Hager's estimate of `‖A⁻¹‖₁` (a lower bound that is almost always within a small factor).
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve_in_place(&mut y);
            let norm: f64 = y.iter().map(|z| z.norm()).sum();
            if !norm.is_finite() {
                return f64::INFINITY;
            }
            if norm <= estimate {
                break;
            }
            estimate = norm;
            let mut z: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    let m = v.norm();
                    if m > 0.0 {
                        v / m
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect();
            self.solve_adjoint_in_place(&mut z);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            x[j] = Complex64::new(1.0, 0.0);
        }
        estimate
    }

    /// Reassembles `P⁻¹ L U` (test helper).
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let mut m = DMatrix::from_fn(n, n, |i, j| {
            (0..=i.min(j))
                .map(|k| {
                    let l = if k == i { Complex64::new(1.0, 0.0) } else { self.at(i, k) };
                    l * self.at(k, j)
                })
                .sum::<Complex64>()
        });
        for (k, &p) in self.pivots.iter().enumerate().rev() {
            m.swap_rows(k, p);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pseudo_random(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()))
    }

    #[test]
    fn solves_against_nalgebra() {
        for n in [1, 2, 7, 40] {
            let a = pseudo_random(n, n as u64);
            let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
            let lu = LuFactorization::new(a.clone()).unwrap();
            let x = lu.solve(&b);
            let oracle = a.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - oracle[i]).norm() < 1e-10);
            }
            let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
            assert!(r.camax() < 1e-12);
        }
    }

    #[test]
    fn adjoint_solve() {
        let a = pseudo_random(25, 9);
        let lu = LuFactorization::new(a.clone()).unwrap();
        let b: Vec<Complex64> = (0..25).map(|i| Complex64::new(1.0, -(i as f64))).collect();
        let mut x = b.clone();
        lu.solve_adjoint_in_place(&mut x);
        let r = a.adjoint() * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.camax() < 1e-11);
    }

    #[test]
    fn condition_estimate_on_diagonal() {
        let mut a = DMatrix::<Complex64>::identity(6, 6);
        a[(3, 3)] = Complex64::new(1e-6, 0.0);
        a[(0, 0)] = Complex64::new(0.0, 2.0);
        let lu = LuFactorization::new(a).unwrap();
        assert!((lu.condition() - 2e6).abs() < 1e-6 * 2e6);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = pseudo_random(5, 3);
        let row = a.row(1).clone_owned();
        a.set_row(4, &row);
        assert!(matches!(LuFactorization::new(a), Err(Error::Singular { .. })));
        let z = DMatrix::<Complex64>::zeros(3, 3);
        assert!(matches!(LuFactorization::new(z), Err(Error::Singular { .. })));
    }

    #[test]
    fn condition_estimate_matches_explicit_inverse() {
        let a = pseudo_random(30, 4);
        let lu = LuFactorization::new(a.clone()).unwrap();
        let inv = a.try_inverse().unwrap();
        let exact = (0..30)
            .map(|j| inv.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let est = lu.inverse_norm1_estimate();
        assert!(est <= exact * (1.0 + 1e-10) && est >= exact / 3.0, "{est} vs {exact}");
    }

    proptest! {
        #[test]
        fn reconstruction(seed in 0u64..1000, n in 1usize..12) {
            let a = pseudo_random(n, seed);
            let lu = LuFactorization::factor_unchecked(a.clone()).unwrap();
            prop_assert!((lu.reconstruct() - a).camax() < 1e-12);
        }
    }
}
