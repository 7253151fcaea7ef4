//! Cylindrical Bessel and Hankel functions of real argument.
//!
//! Three regimes are used for the order-0/1 functions:
//!
//! * `x <= 2`: ascending power series;
//! * `2 < x < 25`: Miller backward recurrence for `J_k`, normalized with
//!   `1 = J_0 + 2 Σ J_{2k}`, and Neumann series for `Y_0`, `Y_1`;
//! * `x >= 25`: Hankel asymptotic expansion.
//!
//! Each regime is accurate to a few ulps relative to `|H_ν(x)|`.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_LIMIT: f64 = 2.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// `J_0, J_1, Y_0, Y_1` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselValues {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BesselValues {
    pub fn hankel(&self) -> HankelPair {
        HankelPair {
            h0: Complex64::new(self.j0, self.y0),
            h1: Complex64::new(self.j1, self.y1),
        }
    }
}

/// `H_0^{(1)}` and `H_1^{(1)}` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HankelPair {
    pub h0: Complex64,
    pub h1: Complex64,
}

/// Evaluates `J_0, J_1, Y_0, Y_1` for `x > 0`.
pub fn bessel_j0j1y0y1(x: f64) -> Result<BesselValues> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "bessel_j0j1y0y1",
            value: x,
        });
    }
    Ok(if x <= SERIES_LIMIT {
        ascending_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        miller_neumann(x)
    } else {
        hankel_asymptotic(x)
    })
}

/// `H_0^{(1)}(x)` and `H_1^{(1)}(x)` for `x > 0`.
pub fn hankel01(x: f64) -> Result<HankelPair> {
    bessel_j0j1y0y1(x).map(|b| b.hankel())
}

/// The 2D Helmholtz fundamental solution `(i/4) H_0^{(1)}(k|x-y|)`.
pub fn fundamental_solution(k: f64, x: [f64; 2], y: [f64; 2]) -> Result<Complex64> {
    if !(k > 0.0) {
        return Err(Error::Domain {
            function: "fundamental_solution",
            value: k,
        });
    }
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    if r < 1e-14 {
        return Err(Error::Singularity(r));
    }
    let h = hankel01(k * r)?;
    Ok(Complex64::new(0.0, 0.25) * h.h0)
}

fn ascending_series(x: f64) -> BesselValues {
    let q = 0.25 * x * x;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    // J0 and the Y0 correction share the (q^k / k!^2) terms.
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut y0_sum = 0.0;
    let mut harmonic = 0.0;
    // J1 / Y1 share (q^k / (k! (k+1)!)).
    let mut term1 = 1.0;
    let mut j1_sum = 1.0;
    let mut y1_sum = 1.0 - 2.0 * EULER_GAMMA; // (H_0 + H_1 - 2γ) at k = 0
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        term1 *= -q / (k * (k + 1.0));
        harmonic += 1.0 / k;
        j0 += term;
        y0_sum -= harmonic * term;
        j1_sum += term1;
        y1_sum += (2.0 * harmonic + 1.0 / (k + 1.0) - 2.0 * EULER_GAMMA) * term1;
        if term.abs() < 1e-18 && term1.abs() < 1e-18 {
            break;
        }
        k += 1.0;
    }
    let j1 = 0.5 * x * j1_sum;
    let y0 = (2.0 / PI) * (log_term * j0 + y0_sum);
    let y1 = -2.0 / (PI * x) + (2.0 / PI) * (0.5 * x).ln() * j1 - x / (2.0 * PI) * y1_sum;
    BesselValues { j0, j1, y0, y1 }
}

fn miller_start(x: f64, order: usize) -> usize {
    let n = (x.max(order as f64) + 12.0 * x.cbrt() + 30.0) as usize;
    n + (n & 1)
}

fn miller_neumann(x: f64) -> BesselValues {
    let start = miller_start(x, 1);
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-30;
    for k in (1..=start).rev() {
        j[k - 1] = (2.0 * k as f64 / x) * j[k] - j[k + 1];
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    let scale = 1.0 / norm;
    let jk = |k: usize| j[k] * scale;

    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let mut y0_sum = 0.0;
    let mut y1_sum = 0.0;
    let mut sign = -1.0;
    for k in 1..=start / 2 {
        let kf = k as f64;
        y0_sum += sign * jk(2 * k) / kf;
        y1_sum += sign * (jk(2 * k - 1) - jk(2 * k + 1)) / kf;
        sign = -sign;
    }
    let j0 = jk(0);
    let j1 = jk(1);
    let y0 = (2.0 / PI) * log_term * j0 - (4.0 / PI) * y0_sum;
    let y1 = (2.0 / PI) * (log_term * j1 - j0 / x) + (2.0 / PI) * y1_sum;
    BesselValues { j0, j1, y0, y1 }
}

/// `Σ_k i^k a_k(ν) / x^k` with `a_k(ν) = Π_{j≤k} (4ν² - (2j-1)²) / (k! 8^k)`.
fn hankel_asymptotic_sum(order: f64, x: f64) -> Complex64 {
    let mu = 4.0 * order * order;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= Complex64::new(0.0, (mu - odd * odd) / (kf * 8.0 * x));
        let size = term.norm();
        if size > prev {
            break;
        }
        sum += term;
        if size < 1e-17 {
            break;
        }
        prev = size;
    }
    sum
}

fn hankel_asymptotic(x: f64) -> BesselValues {
    let amp = (2.0 / (PI * x)).sqrt();
    let phase0 = x - FRAC_PI_4;
    let h0 = amp * Complex64::from_polar(1.0, phase0) * hankel_asymptotic_sum(0.0, x);
    let h1 = amp * Complex64::from_polar(1.0, phase0 - FRAC_PI_2) * hankel_asymptotic_sum(1.0, x);
    BesselValues {
        j0: h0.re,
        j1: h1.re,
        y0: h0.im,
        y1: h1.im,
    }
}

/// `J_0(x), …, J_{n_max}(x)` by Miller's algorithm, `x > 0`.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !(x > 0.0) {
        return Err(Error::Domain {
            function: "bessel_j_sequence",
            value: x,
        });
    }
    let start = miller_start(x, n_max + 1);
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        j[k - 1] = (2.0 * k as f64 / x) * j[k] - j[k + 1];
        if k % 2 == 0 {
            norm += 2.0 * j[k];
        }
        if j[k - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
            norm *= 1e-250;
        }
    }
    norm += j[0];
    j.truncate(n_max + 1);
    for v in &mut j {
        *v /= norm;
    }
    Ok(j)
}

/// `Y_0(x), …, Y_{n_max}(x)` by forward recurrence, `x > 0`.
pub fn bessel_y_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    let b = bessel_j0j1y0y1(x)?;
    let mut y = Vec::with_capacity(n_max + 1);
    y.push(b.y0);
    if n_max >= 1 {
        y.push(b.y1);
    }
    for n in 1..n_max {
        let next = (2.0 * n as f64 / x) * y[n] - y[n - 1];
        y.push(next);
    }
    Ok(y)
}

/// `H_n^{(1)}(x)` for `n = 0..=n_max`.
pub fn hankel_sequence(n_max: usize, x: f64) -> Result<Vec<Complex64>> {
    let j = bessel_j_sequence(n_max, x)?;
    let y = bessel_y_sequence(n_max, x)?;
    Ok(j.into_iter().zip(y).map(|(a, b)| Complex64::new(a, b)).collect())
}

/// Derivatives of a cylinder-function sequence `C_0..C_N` (any of J, Y, H):
/// `C_0' = -C_1`, `C_n' = C_{n-1} - (n/x) C_n`.
pub fn derivative_sequence<T>(values: &[T], x: f64) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
{
    let mut out = Vec::with_capacity(values.len());
    for n in 0..values.len() {
        if n == 0 {
            out.push(-values[1]);
        } else {
            out.push(values[n - 1] - values[n] * (n as f64 / x));
        }
    }
    out
}
