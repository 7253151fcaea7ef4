//! Shape and parameter derivatives of the far field.
//!
//! The derivative of the far field in the direction `(h0, h1, Δλ1)` is the
//! far field of the transmission problem with data
//!
//! ```text
//! f1 = -(h0)_ν (∂u+/∂ν - ∂u-/∂ν)                          on S0
//! f2 = (k0² - λ0 k1²)(h0)_ν u + d/ds[(1 - λ0)(h0)_ν du/ds]  on S0
//! f3 = -(h1)_ν (∂u+/∂ν - ∂u-/∂ν)                          on S1
//! f4 = (k1² - λ1 k2²)(h1)_ν u + d/ds[(1 - λ1)(h1)_ν du/ds]
//!      + (Δλ1/λ1) ∂u+/∂ν                                   on S1
//! ```
//!
//! where `u` is the total field of the current plane-wave solve. In the
//! `τ1 = 1/λ1` parametrization the last term is `-(Δτ1/τ1) ∂u+/∂ν`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forward::{BoundaryData, BoundaryTraces, ParamForm, PlaneWaveSolution, TransmissionSystem};
use crate::geometry::{DiscretizedBoundary, Point};

/// One real unknown of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    /// Coefficient `index` (layout `α_0, α_1..α_M (cos), α_{M+1}..α_{2M} (sin)`) of `r0`.
    R0(usize),
    /// Coefficient `index` of `r1`.
    R1(usize),
    /// Center coordinate `a1` (axis 0) or `a2` (axis 1) of the inner boundary.
    Center(usize),
    Lambda1,
    Tau1,
}

/// Trigonometric basis function `b_index` of a degree-`degree` radius expansion.
pub fn radial_basis(index: usize, degree: usize, theta: f64) -> f64 {
    if index == 0 {
        1.0
    } else if index <= degree {
        (index as f64 * theta).cos()
    } else {
        ((index - degree) as f64 * theta).sin()
    }
}

/// A perturbation `(h0, h1, Δλ1 | Δτ1)` sampled at the boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    pub which: Option<Parameter>,
    pub h0: Vec<Point>,
    pub h1: Vec<Point>,
    /// `Δλ1` or `Δτ1`, depending on `form`.
    pub delta: f64,
    pub form: ParamForm,
}

impl PerturbationDirection {
    pub fn zero(outer: &DiscretizedBoundary, inner: &DiscretizedBoundary) -> Self {
        Self {
            which: None,
            h0: vec![[0.0; 2]; outer.len()],
            h1: vec![[0.0; 2]; inner.len()],
            delta: 0.0,
            form: ParamForm::Lambda,
        }
    }

    /// The canonical direction for one unknown. Radial directions are
    /// `b_l(θ)(cos θ, sin θ)` at the node with parameter `θ`.
    pub fn canonical(p: Parameter, degree: usize, outer: &DiscretizedBoundary, inner: &DiscretizedBoundary) -> Self {
        let mut d = Self::zero(outer, inner);
        d.which = Some(p);
        let radial = |b: &DiscretizedBoundary, index: usize| -> Vec<Point> {
            b.nodes
                .iter()
                .map(|&t| {
                    let v = radial_basis(index, degree, t);
                    [v * t.cos(), v * t.sin()]
                })
                .collect()
        };
        match p {
            Parameter::R0(i) => d.h0 = radial(outer, i),
            Parameter::R1(i) => d.h1 = radial(inner, i),
            Parameter::Center(axis) => {
                let mut e = [0.0; 2];
                e[axis] = 1.0;
                d.h1 = vec![e; inner.len()];
            }
            Parameter::Lambda1 => d.delta = 1.0,
            Parameter::Tau1 => {
                d.delta = 1.0;
                d.form = ParamForm::Tau;
            }
        }
        d
    }

    pub fn scaled(&self, a: f64) -> Self {
        let s = |h: &[Point]| h.iter().map(|v| [a * v[0], a * v[1]]).collect();
        Self {
            which: self.which,
            h0: s(&self.h0),
            h1: s(&self.h1),
            delta: a * self.delta,
            form: self.form,
        }
    }
}

/// `h · ν` at the nodes.
pub fn normal_component(h: &[Point], b: &DiscretizedBoundary) -> Vec<f64> {
    h.iter().zip(&b.normals).map(|(h, n)| h[0] * n[0] + h[1] * n[1]).collect()
}

/// Surface divergence of the tangential field `g t` on a closed curve: `dg/ds`.
pub fn surface_divergence<T>(g: &[T], curve: &DiscretizedBoundary) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    curve.arc_derivative(g)
}

fn interface_data(
    hn: &[f64],
    u: &[Complex64],
    du_ds: &[Complex64],
    dn_plus: &[Complex64],
    dn_minus: &[Complex64],
    k_out: f64,
    k_in: f64,
    lambda: f64,
    curve: &DiscretizedBoundary,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let fa: Vec<Complex64> = (0..hn.len()).map(|j| -hn[j] * (dn_plus[j] - dn_minus[j])).collect();
    let flux: Vec<Complex64> = (0..hn.len()).map(|j| du_ds[j] * ((1.0 - lambda) * hn[j])).collect();
    let div = surface_divergence(&flux, curve);
    let kk = k_out * k_out - lambda * k_in * k_in;
    let fb = (0..hn.len()).map(|j| u[j] * (kk * hn[j]) + div[j]).collect();
    (fa, fb)
}

/// Data `f1..f4` of the derivative problem for `dir` at the state solved by `system`.
pub fn derivative_boundary_data(
    system: &TransmissionSystem,
    traces: &BoundaryTraces,
    dir: &PerturbationDirection,
) -> Result<BoundaryData> {
    let p = &system.params;
    let l1 = system.lambda1();
    let (outer, inner) = (&system.outer, &system.inner);
    if dir.h0.len() != outer.len() || dir.h1.len() != inner.len() {
        return Err(Error::Input("perturbation does not match the boundary grids".into()));
    }
    let h0n = normal_component(&dir.h0, outer);
    let h1n = normal_component(&dir.h1, inner);
    let to = &traces.outer;
    let ti = &traces.inner;
    let (f1, f2) = interface_data(
        &h0n,
        &to.u_minus,
        &to.du_ds,
        &to.dn_u_plus,
        &to.dn_u_minus,
        p.k0,
        p.k1,
        p.lambda0,
        outer,
    );
    let (f3, mut f4) = interface_data(
        &h1n,
        &ti.u_minus,
        &ti.du_ds,
        &ti.dn_u_plus,
        &ti.dn_u_minus,
        p.k1,
        p.k2,
        l1,
        inner,
    );
    if dir.delta != 0.0 {
        let coef = match dir.form {
            ParamForm::Lambda => {
                if l1 == 0.0 {
                    return Err(Error::Input("λ1 = 0: use the τ-form derivative".into()));
                }
                dir.delta / l1
            }
            // τ1 = 1/λ1, so -Δτ1/τ1 = -Δτ1 λ1.
            ParamForm::Tau => -dir.delta * l1,
        };
        for (f, d) in f4.iter_mut().zip(&ti.dn_u_plus) {
            *f += d * coef;
        }
    }
    Ok(BoundaryData { f1, f2, f3, f4 })
}

/// Weight making the Euclidean norm of stacked samples equal the discrete `L²(S¹)` norm.
pub fn l2_weight(n_obs: usize) -> f64 {
    (2.0 * PI / n_obs as f64).sqrt()
}

/// Stacks complex far-field columns (one per incident direction) into the real vector
/// `[Re u_1, Im u_1, Re u_2, Im u_2, …]`, scaled by [`l2_weight`].
pub fn stack_real(columns: &[Vec<Complex64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(columns.iter().map(|c| 2 * c.len()).sum());
    for col in columns {
        let w = l2_weight(col.len());
        out.extend(col.iter().map(|z| z.re * w));
        out.extend(col.iter().map(|z| z.im * w));
    }
    out
}

/// Real Jacobian of the stacked far fields with respect to `parameters`.
#[derive(Debug, Clone)]
pub struct JacobianBlock {
    pub parameters: Vec<Parameter>,
    /// `(2 n_obs P) × parameters.len()`.
    pub matrix: DMatrix<f64>,
}

/// Canonical unknowns in column order `[r0 | r1 | a1, a2 | λ1 or τ1]`.
pub fn canonical_parameters(degree: usize, form: ParamForm, include_center: bool) -> Vec<Parameter> {
    let nc = 2 * degree + 1;
    let mut out: Vec<Parameter> = (0..nc).map(Parameter::R0).collect();
    out.extend((0..nc).map(Parameter::R1));
    if include_center {
        out.push(Parameter::Center(0));
        out.push(Parameter::Center(1));
    }
    out.push(match form {
        ParamForm::Lambda => Parameter::Lambda1,
        ParamForm::Tau => Parameter::Tau1,
    });
    out
}

/// Complex derivative far fields, one vector per incident direction, for one direction.
pub fn directional_derivative(
    system: &TransmissionSystem,
    solutions: &[PlaneWaveSolution],
    response: &DMatrix<Complex64>,
    dir: &PerturbationDirection,
) -> Result<Vec<Vec<Complex64>>> {
    solutions
        .iter()
        .map(|sol| {
            let data = derivative_boundary_data(system, &sol.traces, dir)?;
            let r = system.rhs(&data)?;
            let mut out = vec![Complex64::new(0.0, 0.0); response.nrows()];
            for (j, x) in r.iter().enumerate() {
                if x.re == 0.0 && x.im == 0.0 {
                    continue;
                }
                for (o, g) in out.iter_mut().zip(response.column(j).iter()) {
                    *o += g * x;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Jacobian columns for `parameters` at the state solved by `system`, using the
/// plane-wave `solutions` (one per incident direction) and radius degree `degree`.
pub fn jacobian(
    system: &TransmissionSystem,
    solutions: &[PlaneWaveSolution],
    parameters: &[Parameter],
    degree: usize,
    observation: &[Point],
) -> Result<JacobianBlock> {
    let response = system.far_field_response(observation);
    let columns: Vec<Vec<f64>> = parameters
        .par_iter()
        .map(|&p| {
            let dir = PerturbationDirection::canonical(p, degree, &system.outer, &system.inner);
            Ok(stack_real(&directional_derivative(system, solutions, &response, &dir)?))
        })
        .collect::<Result<_>>()?;
    let rows = 2 * observation.len() * solutions.len();
    Ok(JacobianBlock {
        parameters: parameters.to_vec(),
        matrix: DMatrix::from_fn(rows, parameters.len(), |i, j| columns[j][i]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::MediumParams;
    use crate::geometry::{ParametricCurve, StarlikeShape};
    use crate::operators::unit_directions;

    fn solve(
        outer: &StarlikeShape,
        inner: &StarlikeShape,
        p: &MediumParams,
        n: usize,
        obs: &[Point],
    ) -> (TransmissionSystem, Vec<PlaneWaveSolution>) {
        let sys = crate::forward::assemble_system(
            &ParametricCurve::Starlike(outer.clone()),
            &ParametricCurve::Starlike(inner.clone()),
            n,
            p,
        )
        .unwrap();
        let sol = sys.solve_plane_wave([1.0, 0.0], obs).unwrap();
        (sys, vec![sol])
    }

    fn perturbed(s: &StarlikeShape, index: usize, eps: f64) -> StarlikeShape {
        let mut c = s.coeffs().to_vec();
        c[index] += eps;
        StarlikeShape::new(s.center, c).unwrap()
    }

    #[test]
    fn surface_divergence_examples() {
        let unit = ParametricCurve::circle(1.0).discretize(16).unwrap();
        let g: Vec<f64> = unit.nodes.iter().map(|t| t.cos()).collect();
        for (d, t) in surface_divergence(&g, &unit).iter().zip(&unit.nodes) {
            assert!((d + t.sin()).abs() < 1e-12);
        }
        let two = ParametricCurve::circle(2.0).discretize(16).unwrap();
        for (d, t) in surface_divergence(&g, &two).iter().zip(&two.nodes) {
            assert!((d + t.sin() / 2.0).abs() < 1e-12);
        }
        assert!(surface_divergence(&vec![2.5; 32], &two).iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn normal_components_of_canonical_directions() {
        let outer = ParametricCurve::circle(2.0).discretize(16).unwrap();
        let inner = ParametricCurve::preset("kite").unwrap().discretize(16).unwrap();
        let d = PerturbationDirection::canonical(Parameter::R0(4), 3, &outer, &inner);
        for (hn, t) in normal_component(&d.h0, &outer).iter().zip(&outer.nodes) {
            assert!((hn - t.sin()).abs() < 1e-14);
        }
        assert!(d.h1.iter().all(|h| h == &[0.0, 0.0]) && d.delta == 0.0);
        let c = PerturbationDirection::canonical(Parameter::Center(1), 3, &outer, &inner);
        for (hn, nu) in normal_component(&c.h1, &inner).iter().zip(&inner.normals) {
            assert_eq!(*hn, nu[1]);
        }
    }

    #[test]
    fn zero_direction_gives_zero_data() {
        let p = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 3.0).unwrap();
        let o = StarlikeShape::circle([0.0, 0.0], 2.0, 2).unwrap();
        let i = StarlikeShape::circle([0.2, 0.0], 0.7, 2).unwrap();
        let (sys, sols) = solve(&o, &i, &p, 16, &[]);
        let dir = PerturbationDirection::zero(&sys.outer, &sys.inner);
        let data = derivative_boundary_data(&sys, &sols[0].traces, &dir).unwrap();
        assert!(data.f1.iter().chain(&data.f2).chain(&data.f3).chain(&data.f4).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn lambda_direction_only_touches_f4() {
        let p = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 3.0).unwrap();
        let o = StarlikeShape::circle([0.0, 0.0], 2.0, 2).unwrap();
        let i = StarlikeShape::circle([0.2, 0.0], 0.7, 2).unwrap();
        let (sys, sols) = solve(&o, &i, &p, 16, &[]);
        let dir = PerturbationDirection::canonical(Parameter::Lambda1, 2, &sys.outer, &sys.inner);
        let data = derivative_boundary_data(&sys, &sols[0].traces, &dir).unwrap();
        assert!(data.f1.iter().chain(&data.f2).chain(&data.f3).all(|z| z.norm() == 0.0));
        for (f, d) in data.f4.iter().zip(&sols[0].traces.inner.dn_u_plus) {
            assert_eq!(*f, d * (1.0 / 3.0));
        }
    }

    #[test]
    fn data_is_linear_in_the_direction() {
        let p = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 3.0).unwrap();
        let o = StarlikeShape::circle([0.0, 0.0], 2.0, 2).unwrap();
        let i = StarlikeShape::circle([0.2, 0.0], 0.7, 2).unwrap();
        let (sys, sols) = solve(&o, &i, &p, 16, &[]);
        let a = PerturbationDirection::canonical(Parameter::R0(1), 2, &sys.outer, &sys.inner);
        let b = PerturbationDirection::canonical(Parameter::R1(3), 2, &sys.outer, &sys.inner);
        let sum = PerturbationDirection {
            which: None,
            h0: a.h0.iter().map(|h| [2.0 * h[0], 2.0 * h[1]]).collect(),
            h1: b.h1.iter().map(|h| [-h[0], -h[1]]).collect(),
            delta: 0.0,
            form: ParamForm::Lambda,
        };
        let da = derivative_boundary_data(&sys, &sols[0].traces, &a).unwrap();
        let db = derivative_boundary_data(&sys, &sols[0].traces, &b).unwrap();
        let ds = derivative_boundary_data(&sys, &sols[0].traces, &sum).unwrap();
        for j in 0..32 {
            assert!((ds.f2[j] - 2.0 * da.f2[j]).norm() < 1e-12 * (1.0 + ds.f2[j].norm()));
            assert!((ds.f4[j] + db.f4[j]).norm() < 1e-12 * (1.0 + ds.f4[j].norm()));
        }
    }

    #[test]
    fn chain_rule_and_scaling_of_columns() {
        let p = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 4.0).unwrap();
        let o = StarlikeShape::circle([0.0, 0.0], 2.0, 2).unwrap();
        let i = StarlikeShape::circle([0.2, 0.0], 0.7, 2).unwrap();
        let obs = unit_directions(16);
        let (sys, sols) = solve(&o, &i, &p, 16, &obs);
        let jac = jacobian(&sys, &sols, &[Parameter::Lambda1, Parameter::Tau1, Parameter::R1(2)], 2, &obs).unwrap();
        let response = sys.far_field_response(&obs);
        for r in 0..jac.matrix.nrows() {
            let l = jac.matrix[(r, 0)];
            let t = jac.matrix[(r, 1)];
            assert!((t + 16.0 * l).abs() <= 1e-8 * (t.abs() + 1e-12));
        }
        let dir = PerturbationDirection::canonical(Parameter::R1(2), 2, &sys.outer, &sys.inner);
        let doubled = stack_real(&directional_derivative(&sys, &sols, &response, &dir.scaled(2.0)).unwrap());
        for r in 0..jac.matrix.nrows() {
            assert!((doubled[r] - 2.0 * jac.matrix[(r, 2)]).abs() <= 1e-12 * (1.0 + doubled[r].abs()));
        }
    }

    #[test]
    fn columns_match_finite_differences_on_circles() {
        let p = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 3.0).unwrap();
        let o = StarlikeShape::new([0.0, 0.0], vec![2.0, 0.1, 0.0, 0.0, 0.05]).unwrap();
        let i = StarlikeShape::new([0.2, -0.1], vec![0.7, 0.0, 0.05, 0.0, 0.0]).unwrap();
        let obs = unit_directions(16);
        let n = 32;
        let (sys, sols) = solve(&o, &i, &p, n, &obs);
        let params = canonical_parameters(2, ParamForm::Lambda, true);
        let jac = jacobian(&sys, &sols, &params, 2, &obs).unwrap();
        let h = 1e-4;
        let ff = |o: &StarlikeShape, i: &StarlikeShape, p: &MediumParams| stack_real(&[solve(o, i, p, n, &obs).1[0].far_field.clone()]);
        for (col, param) in params.iter().enumerate() {
            let (plus, minus) = match *param {
                Parameter::R0(k) => (ff(&perturbed(&o, k, h), &i, &p), ff(&perturbed(&o, k, -h), &i, &p)),
                Parameter::R1(k) => (ff(&o, &perturbed(&i, k, h), &p), ff(&o, &perturbed(&i, k, -h), &p)),
                Parameter::Center(a) => {
                    let shift = |e: f64| {
                        let mut c = i.center;
                        c[a] += e;
                        StarlikeShape::new(c, i.coeffs().to_vec()).unwrap()
                    };
                    (ff(&o, &shift(h), &p), ff(&o, &shift(-h), &p))
                }
                Parameter::Lambda1 => {
                    let q = |e: f64| MediumParams { lambda1: 3.0 + e, ..p };
                    (ff(&o, &i, &q(h)), ff(&o, &i, &q(-h)))
                }
                Parameter::Tau1 => unreachable!(),
            };
            let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let num: f64 = fd.iter().enumerate().map(|(r, v)| (v - jac.matrix[(r, col)]).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num <= 1e-5 * den.max(1e-3), "{param:?}: {num} vs {den}");
        }
    }
}
