//! Nyström matrices of the boundary integral operators and the far-field operators.
//!
//! For boundaries `S_i` (target) and `S_j` (source) and wavenumber `k`:
//!
//! ```text
//! (S ψ)(x)  = ∫ Φ(x,y) ψ(y) ds(y)
//! (K ψ)(x)  = ∫ ∂Φ(x,y)/∂ν(y) ψ(y) ds(y)
//! (K' ψ)(x) = ∫ ∂Φ(x,y)/∂ν(x) ψ(y) ds(y)
//! (T ψ)(x)  = ∂/∂ν(x) ∫ ∂Φ(x,y)/∂ν(y) ψ(y) ds(y)
//! ```
//!
//! with `Φ(x,y) = (i/4) H_0^{(1)}(k|x-y|)`. Same-curve kernels are split as
//! `k1(t,τ) ln(4 sin²((t-τ)/2)) + k2(t,τ)` and integrated with the Kress rule;
//! same-curve `T` uses Maue's identity
//! `T ψ = d/ds S(dψ/ds) + k² ν·S(ν ψ)` with the cotangent rule for the
//! finite-part term. Cross-curve kernels are smooth and use the trapezoid rule.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::geometry::{differentiation_row, DiscretizedBoundary, Point};
use crate::quadrature::WeightTable;
use crate::specfun::{hankel01, EULER_GAMMA};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// Single layer.
    S,
    /// Double layer.
    K,
    /// Normal derivative of the single layer.
    KT,
    /// Normal derivative of the double layer.
    T,
}

/// One discretized operator between two boundaries.
#[derive(Debug, Clone)]
pub struct OperatorBlock {
    pub kind: OperatorKind,
    pub wavenumber: f64,
    /// `(2 n_target) × (2 n_source)`.
    pub matrix: DMatrix<Complex64>,
}

/// All four operators for one (target, source, wavenumber) triple, sharing the
/// Hankel evaluations.
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub wavenumber: f64,
    pub s: DMatrix<Complex64>,
    pub k: DMatrix<Complex64>,
    pub kt: DMatrix<Complex64>,
    pub t: DMatrix<Complex64>,
}

impl BlockSet {
    pub fn get(&self, kind: OperatorKind) -> &DMatrix<Complex64> {
        match kind {
            OperatorKind::S => &self.s,
            OperatorKind::K => &self.k,
            OperatorKind::KT => &self.kt,
            OperatorKind::T => &self.t,
        }
    }
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Assembles one operator. The same-curve quadrature is used when `target == source`.
pub fn assemble_block(
    target: &DiscretizedBoundary,
    source: &DiscretizedBoundary,
    k: f64,
    kind: OperatorKind,
) -> Result<OperatorBlock> {
    let set = assemble_blocks(target, source, k)?;
    let matrix = match kind {
        OperatorKind::S => set.s,
        OperatorKind::K => set.k,
        OperatorKind::KT => set.kt,
        OperatorKind::T => set.t,
    };
    Ok(OperatorBlock {
        kind,
        wavenumber: k,
        matrix,
    })
}

/// Assembles `S`, `K`, `K'` and `T` from `source` to `target` at wavenumber `k`.
pub fn assemble_blocks(target: &DiscretizedBoundary, source: &DiscretizedBoundary, k: f64) -> Result<BlockSet> {
    if !(k > 0.0) {
        return Err(Error::Input(format!("wavenumber must be positive, got {k}")));
    }
    if std::ptr::eq(target, source) || target == source {
        same_curve(source, k)
    } else {
        cross_curve(target, source, k)
    }
}

type Row = Vec<[Complex64; 4]>;

fn collect_rows(rows: Vec<Row>, ncols: usize) -> [DMatrix<Complex64>; 4] {
    let nrows = rows.len();
    let mut out = [
        DMatrix::zeros(nrows, ncols),
        DMatrix::zeros(nrows, ncols),
        DMatrix::zeros(nrows, ncols),
        DMatrix::zeros(nrows, ncols),
    ];
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            for (m, v) in out.iter_mut().zip(e) {
                m[(i, j)] = *v;
            }
        }
    }
    out
}

fn cross_curve(target: &DiscretizedBoundary, source: &DiscretizedBoundary, k: f64) -> Result<BlockSet> {
    let w = PI / source.n as f64;
    let rows: Vec<Result<Row>> = (0..target.len())
        .into_par_iter()
        .map(|i| {
            let x = target.points[i];
            let nx = target.normals[i];
            (0..source.len())
                .map(|j| {
                    let y = source.points[j];
                    let d = [x[0] - y[0], x[1] - y[1]];
                    let r = d[0].hypot(d[1]);
                    if r < 1e-14 {
                        return Err(Error::Singularity(r));
                    }
                    let h = hankel01(k * r)?;
                    let ny = source.normals[j];
                    let sw = source.speed[j] * w;
                    let (nxd, nyd) = (dot(nx, d), dot(ny, d));
                    let s = I / 4.0 * h.h0;
                    let kk = I * k / 4.0 * h.h1 / r * nyd;
                    let kt = -I * k / 4.0 * h.h1 / r * nxd;
                    let t = I * k / 4.0
                        * ((k * h.h0 / r - 2.0 * h.h1 / (r * r)) * (nxd * nyd / r) + h.h1 / r * dot(nx, ny));
                    Ok([s * sw, kk * sw, kt * sw, t * sw])
                })
                .collect()
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let [s, kk, kt, t] = collect_rows(rows, source.len());
    if target_is_close(target, source) {
        log::warn!("boundaries are closer than the containment margin; cross-curve quadrature may be inaccurate");
    }
    Ok(BlockSet {
        wavenumber: k,
        s,
        k: kk,
        kt,
        t,
    })
}

fn target_is_close(target: &DiscretizedBoundary, source: &DiscretizedBoundary) -> bool {
    crate::geometry::polyline_distance(&target.points, &source.points) < crate::geometry::CONTAINMENT_MARGIN
}

fn same_curve(b: &DiscretizedBoundary, k: f64) -> Result<BlockSet> {
    let n = b.n;
    let len = b.len();
    let w = PI / n as f64;
    let table = WeightTable::new(n);
    let inv4pi = 1.0 / (4.0 * PI);
    let logs: Vec<f64> = (0..len)
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                (4.0 * (PI * m as f64 / len as f64).sin().powi(2)).ln()
            }
        })
        .collect();
    let cots: Vec<f64> = (0..len)
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                1.0 / (PI * m as f64 / len as f64).tan()
            }
        })
        .collect();

    // Row i holds [S, K, K', P, Q] where P and Q are the two parts of Maue's identity.
    let rows: Vec<Result<Vec<[Complex64; 5]>>> = (0..len)
        .into_par_iter()
        .map(|i| {
            let x = b.points[i];
            let dx = b.d1[i];
            let nx = b.normals[i];
            (0..len)
                .map(|j| {
                    let rij = table.log_at(i, j);
                    let sj = b.speed[j];
                    if i == j {
                        let ddx = b.d2[i];
                        let speed2 = sj * sj;
                        let m1 = -inv4pi * sj;
                        let m2 = (I / 4.0 - EULER_GAMMA / (2.0 * PI) - (k * sj / 2.0).ln() / (2.0 * PI)) * sj;
                        let l2 = Complex64::new((dx[1] * ddx[0] - dx[0] * ddx[1]) * inv4pi / speed2, 0.0);
                        let p2 = Complex64::new(-dot(dx, ddx) * inv4pi / speed2, 0.0);
                        let s = rij * m1 + w * m2;
                        let kk = w * l2;
                        return Ok([s, kk, kk, w * p2, k * k * s]);
                    }
                    let y = b.points[j];
                    let d = [x[0] - y[0], x[1] - y[1]];
                    let r = d[0].hypot(d[1]);
                    if r < 1e-14 {
                        return Err(Error::Singularity(r));
                    }
                    let h = hankel01(k * r)?;
                    let (j0, j1) = (h.h0.re, h.h1.re);
                    let m = table.index(i, j);
                    let lg = logs[m];
                    let ny = b.normals[j];
                    let nyd = dot(ny, d) * sj;
                    let nxd = dot(nx, d);

                    let s_full = I / 4.0 * h.h0 * sj;
                    let s1 = -inv4pi * j0 * sj;
                    let s = rij * s1 + w * (s_full - s1 * lg);

                    let k_full = I * k / 4.0 * h.h1 / r * nyd;
                    let k1 = -k * inv4pi * j1 / r * nyd;
                    let kk = rij * k1 + w * (k_full - k1 * lg);

                    let kt_full = -I * k / 4.0 * h.h1 / r * nxd * sj;
                    let kt1 = k * inv4pi * j1 / r * nxd * sj;
                    let kt = rij * kt1 + w * (kt_full - kt1 * lg);

                    let dxd = dot(d, dx);
                    let p1 = k * inv4pi * j1 * dxd / r;
                    let p_full = -I * k / 4.0 * h.h1 * dxd / r + inv4pi * cots[m];
                    let p = rij * p1 + w * (p_full - p1 * lg);

                    let nn = dot(nx, ny);
                    let q = k * k * nn * (rij * s1 + w * (s_full - s1 * lg));
                    Ok([s, kk, kt, p, q])
                })
                .collect()
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut s = DMatrix::zeros(len, len);
    let mut kk = DMatrix::zeros(len, len);
    let mut kt = DMatrix::zeros(len, len);
    let mut p = DMatrix::zeros(len, len);
    let mut t = DMatrix::zeros(len, len);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            s[(i, j)] = e[0];
            kk[(i, j)] = e[1];
            kt[(i, j)] = e[2];
            p[(i, j)] = e[3];
            t[(i, j)] = e[4];
        }
    }
    let drow = differentiation_row(len);
    let dmat = DMatrix::from_fn(len, len, |i, j| Complex64::new(drow[(i + len - j) % len], 0.0));
    let pd = p * dmat;
    for j in 0..len {
        for i in 0..len {
            t[(i, j)] += (pd[(i, j)] + 0.5 * table.hypersingular_at(i, j)) / b.speed[i];
        }
    }
    Ok(BlockSet {
        wavenumber: k,
        s,
        k: kk,
        kt,
        t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FarFieldKind {
    /// Far field of the single layer.
    S,
    /// Far field of the double layer.
    K,
}

/// Maps a density on the outer boundary to far-field samples.
#[derive(Debug, Clone)]
pub struct FarFieldOperator {
    pub kind: FarFieldKind,
    pub k0: f64,
    /// `n_obs × (2n)`.
    pub matrix: DMatrix<Complex64>,
}

/// The far-field prefactor `e^{iπ/4} / √(8πk)`.
pub fn farfield_prefactor(k: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (8.0 * PI * k).sqrt(), FRAC_PI_4)
}

pub fn assemble_farfield(
    source: &DiscretizedBoundary,
    k0: f64,
    directions: &[Point],
    kind: FarFieldKind,
) -> FarFieldOperator {
    let gamma = farfield_prefactor(k0);
    let w = PI / source.n as f64;
    let matrix = DMatrix::from_fn(directions.len(), source.len(), |l, j| {
        let xh = directions[l];
        let y = source.points[j];
        let e = Complex64::from_polar(1.0, -k0 * dot(xh, y));
        let sj = source.speed[j];
        match kind {
            FarFieldKind::S => gamma * e * (sj * w),
            FarFieldKind::K => gamma * (-I * k0 * dot(xh, source.normals[j])) * e * (sj * w),
        }
    });
    FarFieldOperator { kind, k0, matrix }
}

/// Unit vectors at angles `2π i / count`.
pub fn unit_directions(count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let (s, c) = (2.0 * PI * i as f64 / count as f64).sin_cos();
            [c, s]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ParametricCurve, Preset};
    use crate::specfun::{bessel_j0j1y0y1, bessel_j_sequence, derivative_sequence, hankel_sequence};
    use nalgebra::DVector;

    fn apply(m: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
        (m * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// Eigenvalues of S, K, T on the circle of radius `a` for the density `e^{imθ}`.
    fn circle_eigenvalues(a: f64, k: f64, m: usize) -> (Complex64, Complex64, Complex64) {
        let x = k * a;
        let j = bessel_j_sequence(m + 1, x).unwrap();
        let h = hankel_sequence(m + 1, x).unwrap();
        let dj = derivative_sequence(&j, x);
        let dh = derivative_sequence(&h, x);
        let s = I * PI * a / 2.0 * j[m] * h[m];
        let kk = I * PI * a * k / 4.0 * (dj[m] * h[m] + j[m] * dh[m]);
        let t = I * PI * a * k * k / 2.0 * dj[m] * dh[m];
        (s, kk, t)
    }

    #[test]
    fn single_layer_of_constant_on_unit_circle() {
        let b = ParametricCurve::circle(1.0).discretize(32).unwrap();
        for k in [0.5, 1.0, 2.0, 5.0] {
            let set = assemble_blocks(&b, &b, k).unwrap();
            let bv = bessel_j0j1y0y1(k).unwrap();
            let want = I * PI / 2.0 * bv.j0 * Complex64::new(bv.j0, bv.y0);
            let got = apply(&set.s, &vec![Complex64::new(1.0, 0.0); 64]);
            for g in got {
                assert!((g - want).norm() < 1e-12, "k={k}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn circle_eigenvalues_all_kinds() {
        for (a, k) in [(1.0, 1.0), (2.0, 2.0), (0.5, 8.0), (1.5, 3.3)] {
            let b = ParametricCurve::Preset(Preset::Circle {
                radius: a,
                center: [0.3, -0.2],
            })
            .discretize(32)
            .unwrap();
            let set = assemble_blocks(&b, &b, k).unwrap();
            for m in [0usize, 1, 2, 5, 9] {
                let dens: Vec<Complex64> = b.nodes.iter().map(|t| Complex64::from_polar(1.0, m as f64 * t)).collect();
                let (es, ek, et) = circle_eigenvalues(a, k, m);
                for (mat, ev, name, tol) in [
                    (&set.s, es, "S", 1e-10),
                    (&set.k, ek, "K", 1e-10),
                    (&set.kt, ek, "K'", 1e-10),
                    (&set.t, et, "T", 1e-9 * (1.0 + et.norm())),
                ] {
                    let got = apply(mat, &dens);
                    for (g, d) in got.iter().zip(&dens) {
                        assert!((g - ev * d).norm() < tol, "{name} a={a} k={k} m={m}: {} vs {}", g / d, ev);
                    }
                }
            }
        }
    }

    #[test]
    fn double_layer_gauss_limit() {
        // At small k the double layer of 1 approaches the Laplace value -1/2 on any closed curve.
        let b = ParametricCurve::preset("kite").unwrap().discretize(64).unwrap();
        let got = apply(&assemble_blocks(&b, &b, 1e-4).unwrap().k, &vec![Complex64::new(1.0, 0.0); 128]);
        for g in got {
            assert!((g - Complex64::new(-0.5, 0.0)).norm() < 1e-6, "{g}");
        }
    }

    #[test]
    fn cross_curve_matches_brute_force_trapezoid() {
        let outer = ParametricCurve::circle(2.4).discretize(16).unwrap();
        let inner = ParametricCurve::circle(0.5).discretize(16).unwrap();
        let k = 2.0;
        let set = assemble_blocks(&outer, &inner, k).unwrap();
        let w = PI / 16.0;
        for i in [0, 7, 20] {
            for j in [0, 3, 31] {
                let x = outer.points[i];
                let theta = inner.nodes[j];
                let y = [0.5 * theta.cos(), 0.5 * theta.sin()];
                let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                let bv = bessel_j0j1y0y1(k * r).unwrap();
                let want = I / 4.0 * Complex64::new(bv.j0, bv.y0) * 0.5 * w;
                assert!((set.s[(i, j)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_curve_t_against_finite_differences() {
        let outer = ParametricCurve::preset("rounded_triangle").unwrap().discretize(8).unwrap();
        let inner = ParametricCurve::preset("apple").unwrap().discretize(8).unwrap();
        let k = 1.7;
        let set = assemble_blocks(&outer, &inner, k).unwrap();
        let w = PI / 8.0;
        let h = 1e-4;
        let kernel_k = |x: Point, j: usize| {
            let y = inner.points[j];
            let d = [x[0] - y[0], x[1] - y[1]];
            let r = d[0].hypot(d[1]);
            let hk = hankel01(k * r).unwrap();
            I * k / 4.0 * hk.h1 / r * dot(inner.normals[j], d) * inner.speed[j] * w
        };
        for i in [0, 5, 11] {
            for j in [1, 9] {
                let x = outer.points[i];
                let nu = outer.normals[i];
                let xp = [x[0] + h * nu[0], x[1] + h * nu[1]];
                let xm = [x[0] - h * nu[0], x[1] - h * nu[1]];
                let fd = (kernel_k(xp, j) - kernel_k(xm, j)) / (2.0 * h);
                assert!((set.t[(i, j)] - fd).norm() < 1e-7 * (1.0 + fd.norm()));
                assert!((set.k[(i, j)] - kernel_k(x, j)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn spectral_self_convergence_on_presets() {
        for name in ["apple", "kite", "rounded_square", "rounded_triangle"] {
            let curve = ParametricCurve::preset(name).unwrap();
            for k in [1.0, 8.0] {
                let eval = |n: usize| {
                    let b = curve.discretize(n).unwrap();
                    let set = assemble_blocks(&b, &b, k).unwrap();
                    let dens: Vec<Complex64> =
                        b.nodes.iter().map(|t| Complex64::new(t.cos().exp(), (2.0 * t).sin())).collect();
                    [&set.s, &set.k, &set.kt, &set.t].map(|m| apply(m, &dens))
                };
                // Curves whose kernels have complex singularities close to the real axis, and
                // k = 8 on the larger curves, need this many nodes to reach the tolerance.
                let n = 128;
                let coarse = eval(n);
                let fine = eval(2 * n);
                for (op, (c, f)) in coarse.iter().zip(&fine).enumerate() {
                    let scale = f.iter().map(|z| z.norm()).fold(1.0, f64::max);
                    for i in 0..2 * n {
                        assert!((c[i] - f[2 * i]).norm() < 1e-10 * scale, "{name} k={k} op={op} i={i}: {} vs {}", c[i], f[2 * i]);
                    }
                }
            }
        }
    }

    #[test]
    fn farfield_of_constant_density_on_unit_circle() {
        let b = ParametricCurve::circle(1.0).discretize(32).unwrap();
        let dirs = unit_directions(7);
        for k in [0.7, 2.0, 6.0] {
            let gamma = farfield_prefactor(k);
            let bv = bessel_j0j1y0y1(k).unwrap();
            let ones = vec![Complex64::new(1.0, 0.0); 64];
            let s = apply(&assemble_farfield(&b, k, &dirs, FarFieldKind::S).matrix, &ones);
            let kk = apply(&assemble_farfield(&b, k, &dirs, FarFieldKind::K).matrix, &ones);
            for (a, c) in s.iter().zip(&kk) {
                assert!((a - gamma * 2.0 * PI * bv.j0).norm() < 1e-13);
                assert!((c - gamma * (-2.0 * PI * k * bv.j1)).norm() < 1e-13);
            }
            let zero = apply(&assemble_farfield(&b, k, &dirs, FarFieldKind::K).matrix, &vec![Complex64::new(0.0, 0.0); 64]);
            assert!(zero.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn blocks_are_finite_for_separated_curves() {
        let outer = ParametricCurve::preset("rounded_square").unwrap().discretize(32).unwrap();
        let inner = ParametricCurve::preset("kite").unwrap().discretize(32).unwrap();
        for (t, s) in [(&outer, &inner), (&inner, &outer), (&outer, &outer)] {
            let set = assemble_blocks(t, s, 3.0).unwrap();
            for m in [&set.s, &set.k, &set.kt, &set.t] {
                assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
            }
        }
    }

    #[test]
    fn nonpositive_wavenumber_is_rejected() {
        let b = ParametricCurve::circle(1.0).discretize(8).unwrap();
        assert!(assemble_blocks(&b, &b, 0.0).is_err());
        assert!(assemble_block(&b, &b, -1.0, OperatorKind::S).is_err());
    }

}
