//! The forward transmission problem: the 4×4 block system `(I + A) Ψ = R`,
//! far fields, boundary traces, and the concentric-circle series solution.
//!
//! The scattered field in `Ω0` and the total field in `Ω1`, `Ω2` are
//!
//! ```text
//! u^s = λ0 D0[ψ1] + S0[ψ2]                                  in Ω0
//! u   = D1[ψ1] + S1[ψ2] + λ1 D1[ψ3] + S1[ψ4]                in Ω1
//! u   = D2[ψ3] + S2[ψ4]                                     in Ω2
//! ```
//!
//! where `D_l`, `S_l` are double- and single-layer potentials at wavenumber
//! `k_l`, with `ψ1, ψ2` on `S0` and `ψ3, ψ4` on `S1`.

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::geometry::{DiscretizedBoundary, ParametricCurve, Point};
use crate::linalg::LuFactorization;
use crate::operators::{assemble_blocks, assemble_farfield, BlockSet, FarFieldKind};
use crate::specfun::{bessel_j_sequence, derivative_sequence, hankel_sequence};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Minimum admissible `|1 + λ|`.
pub const LAMBDA_GUARD: f64 = 1e-6;
/// Shift applied to a `λ1` that falls inside the guard band.
pub const LAMBDA_NUDGE: f64 = 1e-5;
/// `|λ1|` above which the `ψ3` unknowns and the third block row are rescaled.
pub const EQUILIBRATION_THRESHOLD: f64 = 1e3;

/// Which transmission constant on `S1` is the unknown: `λ1` or `τ1 = 1/λ1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamForm {
    Lambda,
    Tau,
}

/// Wavenumbers and transmission constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub lambda0: f64,
    /// Meaningful when `form == Lambda`.
    pub lambda1: f64,
    /// Meaningful when `form == Tau`.
    pub tau1: f64,
    pub form: ParamForm,
}

impl MediumParams {
    pub fn new(k0: f64, k1: f64, k2: f64, lambda0: f64, lambda1: f64) -> Result<Self> {
        let p = Self {
            k0,
            k1,
            k2,
            lambda0,
            lambda1,
            tau1: 1.0 / lambda1,
            form: ParamForm::Lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau(k0: f64, k1: f64, k2: f64, lambda0: f64, tau1: f64) -> Result<Self> {
        let p = Self {
            k0,
            k1,
            k2,
            lambda0,
            lambda1: 1.0 / tau1,
            tau1,
            form: ParamForm::Tau,
        };
        p.validate()?;
        Ok(p)
    }

    /// `k1 = k0 √n1` and `k2 = k1`.
    pub fn from_refractive_index(k0: f64, n1: f64, lambda0: f64, lambda1: f64) -> Result<Self> {
        let k1 = k0 * n1.sqrt();
        Self::new(k0, k1, k1, lambda0, lambda1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k0", self.k0), ("k1", self.k1), ("k2", self.k2)] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive, got {k}")));
            }
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Input(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        match self.form {
            ParamForm::Lambda if !self.lambda1.is_finite() => {
                Err(Error::Input(format!("lambda1 must be finite, got {}", self.lambda1)))
            }
            ParamForm::Tau if !(self.tau1 != 0.0 && self.tau1.is_finite()) => {
                Err(Error::Input(format!("tau1 must be finite and nonzero, got {}", self.tau1)))
            }
            _ => Ok(()),
        }
    }

    /// The `λ1` fed to the integral equations, shifted out of the guard band around `-1`.
    pub fn effective_lambda1(&self) -> f64 {
        let l = match self.form {
            ParamForm::Lambda => self.lambda1,
            ParamForm::Tau => 1.0 / self.tau1,
        };
        if (1.0 + l).abs() < LAMBDA_GUARD {
            if l >= -1.0 {
                -1.0 + LAMBDA_NUDGE
            } else {
                -1.0 - LAMBDA_NUDGE
            }
        } else {
            l
        }
    }

    pub fn mu0(&self) -> f64 {
        2.0 / (1.0 + self.lambda0)
    }

    pub fn mu1(&self) -> f64 {
        2.0 / (1.0 + self.effective_lambda1())
    }

    /// Same medium at another exterior wavenumber, keeping `k1/k0` and `k2/k0`.
    pub fn at_frequency(&self, k0: f64) -> Self {
        let scale = k0 / self.k0;
        Self {
            k0,
            k1: self.k1 * scale,
            k2: self.k2 * scale,
            ..*self
        }
    }
}

/// Right-hand side data `f1, f2` on `S0` and `f3, f4` on `S1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
    pub f3: Vec<Complex64>,
    pub f4: Vec<Complex64>,
}

impl BoundaryData {
    pub fn zeros(n_outer: usize, n_inner: usize) -> Self {
        Self {
            f1: vec![ZERO; n_outer],
            f2: vec![ZERO; n_outer],
            f3: vec![ZERO; n_inner],
            f4: vec![ZERO; n_inner],
        }
    }

    /// `(-u^i, -∂u^i/∂ν, 0, 0)` for the plane wave `u^i(x) = e^{i k0 x·d}`.
    pub fn plane_wave(outer: &DiscretizedBoundary, inner_len: usize, k0: f64, d: Point) -> Self {
        let mut data = Self::zeros(outer.len(), inner_len);
        for j in 0..outer.len() {
            let x = outer.points[j];
            let ui = Complex64::from_polar(1.0, k0 * (x[0] * d[0] + x[1] * d[1]));
            let nu = outer.normals[j];
            data.f1[j] = -ui;
            data.f2[j] = -I * k0 * (nu[0] * d[0] + nu[1] * d[1]) * ui;
        }
        data
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        let s = |v: &[Complex64]| v.iter().map(|z| z * a).collect();
        Self {
            f1: s(&self.f1),
            f2: s(&self.f2),
            f3: s(&self.f3),
            f4: s(&self.f4),
        }
    }
}

/// The densities `ψ1, ψ2` on `S0` and `ψ3, ψ4` on `S1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
    pub psi3: Vec<Complex64>,
    pub psi4: Vec<Complex64>,
}

/// Traces of the total field on one interface. `minus` is the inner side.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTraces {
    pub u_minus: Vec<Complex64>,
    pub dn_u_minus: Vec<Complex64>,
    pub u_plus: Vec<Complex64>,
    pub dn_u_plus: Vec<Complex64>,
    /// Arc-length derivative of `u` (continuous across the interface).
    pub du_ds: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTraces {
    pub outer: InterfaceTraces,
    pub inner: InterfaceTraces,
}

/// Far-field samples `values[(obs, incident)]` at one exterior wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct FarField {
    pub k0: f64,
    pub incident: Vec<Point>,
    pub observation: Vec<Point>,
    pub values: DMatrix<Complex64>,
}

/// Everything a plane-wave solve produces.
#[derive(Debug, Clone)]
pub struct PlaneWaveSolution {
    pub direction: Point,
    pub densities: DensityVector,
    pub far_field: Vec<Complex64>,
    pub traces: BoundaryTraces,
}

/// The assembled and factored system for one geometry and medium.
#[derive(Debug, Clone)]
pub struct TransmissionSystem {
    pub params: MediumParams,
    pub outer: DiscretizedBoundary,
    pub inner: DiscretizedBoundary,
    lambda1: f64,
    /// Equilibration factor applied to the `ψ3` unknowns and the third block row.
    scale: f64,
    matrix: DMatrix<Complex64>,
    lu: LuFactorization,
    b00_1: BlockSet,
    b01_1: BlockSet,
    b10_1: BlockSet,
    b11_1: BlockSet,
    b11_2: Option<BlockSet>,
}

fn add_block(m: &mut DMatrix<Complex64>, r0: usize, c0: usize, coef: Complex64, b: &DMatrix<Complex64>) {
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            m[(r0 + i, c0 + j)] += coef * b[(i, j)];
        }
    }
}

fn matvec(m: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; m.nrows()];
    for (j, x) in v.iter().enumerate() {
        if x.re == 0.0 && x.im == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
            *o += a * x;
        }
    }
    out
}

fn axpy_all(terms: &[(Complex64, &DMatrix<Complex64>, &[Complex64])], len: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; len];
    for (c, m, v) in terms {
        for (o, x) in out.iter_mut().zip(matvec(m, v)) {
            *o += c * x;
        }
    }
    out
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

impl TransmissionSystem {
    /// Builds `I + A` for the discretized boundaries and factors it.
    pub fn assemble(outer: &DiscretizedBoundary, inner: &DiscretizedBoundary, params: &MediumParams) -> Result<Self> {
        params.validate()?;
        let (k0, k1, k2) = (params.k0, params.k1, params.k2);
        let b00_0 = assemble_blocks(outer, outer, k0)?;
        let b00_1 = assemble_blocks(outer, outer, k1)?;
        let b01_1 = assemble_blocks(outer, inner, k1)?;
        let b10_1 = assemble_blocks(inner, outer, k1)?;
        let b11_1 = assemble_blocks(inner, inner, k1)?;
        let b11_2 = if k2 == k1 { None } else { Some(assemble_blocks(inner, inner, k2)?) };

        let l0 = params.lambda0;
        let l1 = params.effective_lambda1();
        let mu0 = params.mu0();
        let mu1 = params.mu1();
        let scale = if l1.abs() > EQUILIBRATION_THRESHOLD { l1.abs() } else { 1.0 };
        let (n0, n1) = (outer.len(), inner.len());
        let (o2, o3, o4) = (n0, 2 * n0, 2 * n0 + n1);
        let size = 2 * n0 + 2 * n1;
        let b2 = b11_2.as_ref().unwrap_or(&b11_1);

        let mut m = DMatrix::<Complex64>::identity(size, size);
        // Row 1
        add_block(&mut m, 0, 0, c(mu0 * l0), &b00_0.k);
        add_block(&mut m, 0, 0, c(-mu0), &b00_1.k);
        add_block(&mut m, 0, o2, c(mu0), &b00_0.s);
        add_block(&mut m, 0, o2, c(-mu0), &b00_1.s);
        add_block(&mut m, 0, o3, c(-mu0 * l1), &b01_1.k);
        add_block(&mut m, 0, o4, c(-mu0), &b01_1.s);
        // Row 2
        add_block(&mut m, o2, 0, c(-mu0 * l0), &b00_0.t);
        add_block(&mut m, o2, 0, c(mu0 * l0), &b00_1.t);
        add_block(&mut m, o2, o2, c(-mu0), &b00_0.kt);
        add_block(&mut m, o2, o2, c(mu0 * l0), &b00_1.kt);
        add_block(&mut m, o2, o3, c(mu0 * l0 * l1), &b01_1.t);
        add_block(&mut m, o2, o4, c(mu0 * l0), &b01_1.kt);
        // Row 3
        add_block(&mut m, o3, 0, c(mu1), &b10_1.k);
        add_block(&mut m, o3, o2, c(mu1), &b10_1.s);
        add_block(&mut m, o3, o3, c(mu1 * l1), &b11_1.k);
        add_block(&mut m, o3, o3, c(-mu1), &b2.k);
        add_block(&mut m, o3, o4, c(mu1), &b11_1.s);
        add_block(&mut m, o3, o4, c(-mu1), &b2.s);
        // Row 4
        add_block(&mut m, o4, 0, c(-mu1), &b10_1.t);
        add_block(&mut m, o4, o2, c(-mu1), &b10_1.kt);
        add_block(&mut m, o4, o3, c(-mu1 * l1), &b11_1.t);
        add_block(&mut m, o4, o3, c(mu1 * l1), &b2.t);
        add_block(&mut m, o4, o4, c(-mu1), &b11_1.kt);
        add_block(&mut m, o4, o4, c(mu1 * l1), &b2.kt);

        if scale != 1.0 {
            for j in o3..o4 {
                for i in 0..size {
                    m[(i, j)] /= scale;
                }
            }
            for j in 0..size {
                for i in o3..o4 {
                    m[(i, j)] *= scale;
                }
            }
        }
        let lu = LuFactorization::new(m.clone())?;
        Ok(Self {
            params: *params,
            outer: outer.clone(),
            inner: inner.clone(),
            lambda1: l1,
            scale,
            matrix: m,
            lu,
            b00_1,
            b01_1,
            b10_1,
            b11_1,
            b11_2,
        })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// 1-norm condition estimate of the (equilibrated) system matrix.
    pub fn condition(&self) -> f64 {
        self.lu.condition()
    }

    /// The `λ1` actually used (after the guard-band nudge).
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let (n0, n1) = (self.outer.len(), self.inner.len());
        (n0, 2 * n0, 2 * n0 + n1, 2 * n0 + 2 * n1)
    }

    /// The scaled right-hand side `R`, including the equilibration of row 3.
    pub fn rhs(&self, data: &BoundaryData) -> Result<Vec<Complex64>> {
        let (n0, n1) = (self.outer.len(), self.inner.len());
        if data.f1.len() != n0 || data.f2.len() != n0 || data.f3.len() != n1 || data.f4.len() != n1 {
            return Err(Error::Input("boundary data lengths do not match the grids".into()));
        }
        let mu0 = self.params.mu0();
        let mu1 = self.params.mu1();
        let mut r = Vec::with_capacity(self.size());
        r.extend(data.f1.iter().map(|f| f * mu0));
        r.extend(data.f2.iter().map(|f| -f * mu0));
        r.extend(data.f3.iter().map(|f| f * (mu1 * self.scale)));
        r.extend(data.f4.iter().map(|f| -f * mu1));
        Ok(r)
    }

    /// Maps a solution of the equilibrated system back to the densities.
    pub fn unpack(&self, x: &[Complex64]) -> DensityVector {
        let (o2, o3, o4, end) = self.offsets();
        DensityVector {
            psi1: x[..o2].to_vec(),
            psi2: x[o2..o3].to_vec(),
            psi3: x[o3..o4].iter().map(|z| z / self.scale).collect(),
            psi4: x[o4..end].to_vec(),
        }
    }

    pub fn solve(&self, data: &BoundaryData) -> Result<DensityVector> {
        let mut x = self.rhs(data)?;
        self.lu.solve_in_place(&mut x);
        Ok(self.unpack(&x))
    }

    /// `max |(I+A)Ψ - R| / max |R|` in the equilibrated variables.
    pub fn relative_residual(&self, dens: &DensityVector, data: &BoundaryData) -> Result<f64> {
        let r = self.rhs(data)?;
        let mut x = Vec::with_capacity(self.size());
        x.extend(&dens.psi1);
        x.extend(&dens.psi2);
        x.extend(dens.psi3.iter().map(|z| z * self.scale));
        x.extend(&dens.psi4);
        let ax = matvec(&self.matrix, &x);
        let num = ax.iter().zip(&r).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let den = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(if den > 0.0 { num / den } else { num })
    }

    /// `[λ0 K∞ | S∞]`, mapping `(ψ1, ψ2)` to far-field samples.
    pub fn far_field_matrix(&self, observation: &[Point]) -> DMatrix<Complex64> {
        let k = assemble_farfield(&self.outer, self.params.k0, observation, FarFieldKind::K).matrix;
        let s = assemble_farfield(&self.outer, self.params.k0, observation, FarFieldKind::S).matrix;
        let n0 = self.outer.len();
        DMatrix::from_fn(observation.len(), 2 * n0, |i, j| {
            if j < n0 {
                k[(i, j)] * self.params.lambda0
            } else {
                s[(i, j - n0)]
            }
        })
    }

    /// `F (I+A)^{-1}` restricted to far-field rows, as an `n_obs × size` matrix acting on `R`.
    /// Lets derivative far fields be evaluated as a matrix-vector product per right-hand side.
    pub fn far_field_response(&self, observation: &[Point]) -> DMatrix<Complex64> {
        let f = self.far_field_matrix(observation);
        let size = self.size();
        let rows: Vec<Vec<Complex64>> = (0..f.nrows())
            .into_par_iter()
            .map(|i| {
                let mut z = vec![ZERO; size];
                for j in 0..f.ncols() {
                    z[j] = f[(i, j)].conj();
                }
                self.lu.solve_adjoint_in_place(&mut z);
                z.iter().map(|v| v.conj()).collect()
            })
            .collect();
        DMatrix::from_fn(f.nrows(), size, |i, j| rows[i][j])
    }

    pub fn far_field(&self, dens: &DensityVector, observation: &[Point]) -> Vec<Complex64> {
        let mut x = dens.psi1.clone();
        x.extend(&dens.psi2);
        matvec(&self.far_field_matrix(observation), &x)
    }

    /// Traces of the total field on both interfaces, from the layer representations
    /// and the jump relations. On `S1` the normal derivative is taken from the side
    /// where it is not scaled by a large or small `λ1`.
    pub fn boundary_traces(&self, dens: &DensityVector) -> BoundaryTraces {
        let l1 = c(self.lambda1);
        let l0 = self.params.lambda0;
        let (n0, n1) = (self.outer.len(), self.inner.len());
        let b2 = self.b11_2.as_ref().unwrap_or(&self.b11_1);
        let (p1, p2, p3, p4) = (&dens.psi1[..], &dens.psi2[..], &dens.psi3[..], &dens.psi4[..]);
        let one = c(1.0);

        let mut u0 = axpy_all(
            &[(one, &self.b00_1.k, p1), (one, &self.b00_1.s, p2), (l1, &self.b01_1.k, p3), (one, &self.b01_1.s, p4)],
            n0,
        );
        for (u, p) in u0.iter_mut().zip(p1) {
            *u -= 0.5 * p;
        }
        let mut dn0 = axpy_all(
            &[(one, &self.b00_1.t, p1), (one, &self.b00_1.kt, p2), (l1, &self.b01_1.t, p3), (one, &self.b01_1.kt, p4)],
            n0,
        );
        for (u, p) in dn0.iter_mut().zip(p2) {
            *u += 0.5 * p;
        }
        let outer = InterfaceTraces {
            du_ds: self.outer.arc_derivative(&u0),
            u_plus: u0.clone(),
            dn_u_plus: dn0.iter().map(|z| z * l0).collect(),
            u_minus: u0,
            dn_u_minus: dn0,
        };

        let mut u1 = axpy_all(&[(one, &b2.k, p3), (one, &b2.s, p4)], n1);
        for (u, p) in u1.iter_mut().zip(p3) {
            *u -= 0.5 * p;
        }
        let (dn_minus, dn_plus) = if self.lambda1.abs() <= 1.0 {
            let mut dn = axpy_all(&[(one, &b2.t, p3), (one, &b2.kt, p4)], n1);
            for (u, p) in dn.iter_mut().zip(p4) {
                *u += 0.5 * p;
            }
            let plus = dn.iter().map(|z| z * l1).collect();
            (dn, plus)
        } else {
            let mut dn = axpy_all(
                &[(one, &self.b10_1.t, p1), (one, &self.b10_1.kt, p2), (l1, &self.b11_1.t, p3), (one, &self.b11_1.kt, p4)],
                n1,
            );
            for (u, p) in dn.iter_mut().zip(p4) {
                *u -= 0.5 * p;
            }
            let minus = dn.iter().map(|z| z / l1).collect();
            (minus, dn)
        };
        let inner = InterfaceTraces {
            du_ds: self.inner.arc_derivative(&u1),
            u_plus: u1.clone(),
            u_minus: u1,
            dn_u_minus: dn_minus,
            dn_u_plus: dn_plus,
        };
        BoundaryTraces { outer, inner }
    }

    pub fn solve_plane_wave(&self, d: Point, observation: &[Point]) -> Result<PlaneWaveSolution> {
        let data = BoundaryData::plane_wave(&self.outer, self.inner.len(), self.params.k0, d);
        let densities = self.solve(&data)?;
        Ok(PlaneWaveSolution {
            direction: d,
            far_field: self.far_field(&densities, observation),
            traces: self.boundary_traces(&densities),
            densities,
        })
    }

    /// Far fields for several incident directions, solved in parallel.
    pub fn far_fields(&self, incident: &[Point], observation: &[Point]) -> Result<FarField> {
        let f = self.far_field_matrix(observation);
        let cols: Vec<Vec<Complex64>> = incident
            .par_iter()
            .map(|&d| {
                let data = BoundaryData::plane_wave(&self.outer, self.inner.len(), self.params.k0, d);
                let dens = self.solve(&data)?;
                let mut x = dens.psi1;
                x.extend(dens.psi2);
                Ok(matvec(&f, &x))
            })
            .collect::<Result<_>>()?;
        Ok(FarField {
            k0: self.params.k0,
            incident: incident.to_vec(),
            observation: observation.to_vec(),
            values: DMatrix::from_fn(observation.len(), incident.len(), |i, j| cols[j][i]),
        })
    }
}

/// Discretizes both curves with `n` and assembles the system.
pub fn assemble_system(
    outer: &ParametricCurve,
    inner: &ParametricCurve,
    n: usize,
    params: &MediumParams,
) -> Result<TransmissionSystem> {
    let o = outer.discretize(n)?;
    let i = inner.discretize(n)?;
    TransmissionSystem::assemble(&o, &i, params)
}

/// One plane-wave solve: far field on `observation` and boundary traces.
pub fn solve_plane_wave(
    outer: &ParametricCurve,
    inner: &ParametricCurve,
    n: usize,
    params: &MediumParams,
    d: Point,
    observation: &[Point],
) -> Result<PlaneWaveSolution> {
    assemble_system(outer, inner, n, params)?.solve_plane_wave(d, observation)
}

/// Per-mode coefficients of the separation-of-variables solution for two
/// origin-centered circles, incident direction at angle `theta_d`.
///
/// With the incident wave `Σ i^|m| J_m(k0 r) e^{im(θ-θd)}`, mode `m` of the field is
/// `i^|m| [J_m(k0 r) + a H_m(k0 r)]` outside, `i^|m| [b J_m(k1 r) + c H_m(k1 r)]`
/// in the annulus and `i^|m| e J_m(k2 r)` in the core.
#[derive(Debug, Clone)]
pub struct ConcentricOracle {
    pub k0: f64,
    pub k1: f64,
    pub r0: f64,
    pub theta_d: f64,
    /// `[a, b, c, e]` for `m = 0..modes`.
    pub coeffs: Vec<[Complex64; 4]>,
}

impl ConcentricOracle {
    pub fn new(r0: f64, r1: f64, params: &MediumParams, theta_d: f64, modes: usize) -> Result<Self> {
        params.validate()?;
        if !(r0 > r1 && r1 > 0.0) {
            return Err(Error::Input(format!("need r0 > r1 > 0, got {r0}, {r1}")));
        }
        let (k0, k1, k2) = (params.k0, params.k1, params.k2);
        let l0 = params.lambda0;
        let l1 = params.effective_lambda1();
        let top = modes + 1;
        let seq = |x: f64| -> Result<(Vec<f64>, Vec<f64>, Vec<Complex64>, Vec<Complex64>)> {
            let j = bessel_j_sequence(top, x)?;
            let h = hankel_sequence(top, x)?;
            let dj = derivative_sequence(&j, x);
            let dh = derivative_sequence(&h, x);
            Ok((j, dj, h, dh))
        };
        let (j00, dj00, h00, dh00) = seq(k0 * r0)?;
        let (j10, dj10, h10, dh10) = seq(k1 * r0)?;
        let (j11, dj11, h11, dh11) = seq(k1 * r1)?;
        let (j21, dj21, _, _) = seq(k2 * r1)?;
        let mut coeffs = Vec::with_capacity(modes);
        for m in 0..modes {
            // Unknowns scaled by H_m(k0 r0), J_m(k1 r0), H_m(k1 r1), J_m(k2 r1).
            let (sa, sb, sc, se) = (h00[m], c(j10[m]), h11[m], c(j21[m]));
            let mat = Matrix4::new(
                h00[m] / sa,
                -c(j10[m]) / sb,
                -h10[m] / sc,
                ZERO,
                k0 * dh00[m] / sa,
                -l0 * k1 * c(dj10[m]) / sb,
                -l0 * k1 * dh10[m] / sc,
                ZERO,
                ZERO,
                c(j11[m]) / sb,
                h11[m] / sc,
                -c(j21[m]) / se,
                ZERO,
                k1 * c(dj11[m]) / sb,
                k1 * dh11[m] / sc,
                -l1 * k2 * c(dj21[m]) / se,
            );
            let rhs = Vector4::new(-c(j00[m]), -c(k0 * dj00[m]), ZERO, ZERO);
            let x = mat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular { condition: f64::INFINITY })?;
            coeffs.push([x[0] / sa, x[1] / sb, x[2] / sc, x[3] / se]);
        }
        Ok(Self {
            k0,
            k1,
            r0,
            theta_d,
            coeffs,
        })
    }

    /// `u∞(θ) = √(2/(πk0)) e^{-iπ/4} [a_0 + 2 Σ_{m≥1} a_m cos(m(θ-θd))]`.
    pub fn far_field(&self, theta: f64) -> Complex64 {
        let pref = Complex64::from_polar((2.0 / (PI * self.k0)).sqrt(), -FRAC_PI_4);
        let sum: Complex64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, co)| {
                let w = if m == 0 { 1.0 } else { 2.0 * (m as f64 * (theta - self.theta_d)).cos() };
                co[0] * w
            })
            .sum();
        pref * sum
    }

    /// Total field on the outer circle at angle `theta`.
    pub fn outer_trace(&self, theta: f64) -> Result<Complex64> {
        let x = self.k1 * self.r0;
        let j = bessel_j_sequence(self.coeffs.len(), x)?;
        let h = hankel_sequence(self.coeffs.len(), x)?;
        Ok(self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, co)| {
                let w = if m == 0 { 1.0 } else { 2.0 * (m as f64 * (theta - self.theta_d)).cos() };
                I.powu(m as u32) * (co[1] * j[m] + co[2] * h[m]) * w
            })
            .sum())
    }
}

/// Series far field for concentric circles of radii `r0 > r1`, at angles `2πi/n_obs`.
pub fn oracle_concentric_circles(
    r0: f64,
    r1: f64,
    params: &MediumParams,
    theta_d: f64,
    observation: &[f64],
    modes: usize,
) -> Result<Vec<Complex64>> {
    let oracle = ConcentricOracle::new(r0, r1, params, theta_d, modes)?;
    Ok(observation.iter().map(|&t| oracle.far_field(t)).collect())
}
