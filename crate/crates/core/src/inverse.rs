//! Regularized Newton (Levenberg–Marquardt) reconstruction of both boundaries
//! and the transmission constant `λ1`, with a multi-frequency driver.
//!
//! Each step minimizes
//!
//! ```text
//! ‖J Δc + r‖² + β Δcᵀ D Δc
//! ```
//!
//! over the real unknowns `c = [r0 coeffs | r1 coeffs | a1, a2 | λ1 or τ1]`,
//! with `β` chosen so the linearized residual is `ρ‖r‖`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forward::{FarField, MediumParams, ParamForm, PlaneWaveSolution, TransmissionSystem, LAMBDA_GUARD};
use crate::frechet::{canonical_parameters, jacobian, stack_real, Parameter};
use crate::geometry::{check_pair, ParametricCurve, Point, StarlikeShape};

/// Smallest `β` tried by the discrepancy rule.
pub const BETA_MIN: f64 = 1e-12;
/// Step halvings allowed before a frequency stage is aborted.
pub const MAX_HALVINGS: usize = 10;
/// Exact-data stopping floor for `Err`.
pub const ERR_FLOOR: f64 = 1e-8;
/// `|λ1|` at or above which the inner boundary is classified sound-soft.
pub const SOUND_SOFT_THRESHOLD: f64 = 100.0;
/// `|λ1|` at or below which the inner boundary is classified sound-hard.
pub const SOUND_HARD_THRESHOLD: f64 = 0.01;

/// Current iterate: outer boundary centered at the origin, inner boundary with a free center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeState {
    pub gamma0: StarlikeShape,
    pub gamma1: StarlikeShape,
    pub lambda1: f64,
    pub tau1: f64,
    pub form: ParamForm,
}

impl ShapeState {
    pub fn new(gamma0: StarlikeShape, gamma1: StarlikeShape, lambda1: f64) -> Result<Self> {
        if gamma0.center != [0.0, 0.0] {
            return Err(Error::Geometry("the outer boundary must be centered at the origin".into()));
        }
        if gamma0.degree() != gamma1.degree() {
            return Err(Error::Geometry(format!(
                "both boundaries need the same degree, got {} and {}",
                gamma0.degree(),
                gamma1.degree()
            )));
        }
        if !(lambda1 != 0.0 && lambda1.is_finite()) {
            return Err(Error::Input(format!("initial lambda1 must be finite and nonzero, got {lambda1}")));
        }
        let state = Self {
            gamma0,
            gamma1,
            lambda1,
            tau1: 1.0 / lambda1,
            form: ParamForm::Lambda,
        };
        state.validate()?;
        Ok(state)
    }

    /// Two circles, the outer centered at the origin.
    pub fn circles(r0: f64, r1: f64, center1: Point, lambda1: f64, degree: usize) -> Result<Self> {
        Self::new(
            StarlikeShape::circle([0.0, 0.0], r0, degree)?,
            StarlikeShape::circle(center1, r1, degree)?,
            lambda1,
        )
    }

    pub fn degree(&self) -> usize {
        self.gamma0.degree()
    }

    pub fn curves(&self) -> (ParametricCurve, ParametricCurve) {
        (self.gamma0.clone().into(), self.gamma1.clone().into())
    }

    /// Geometry checks plus the `λ1 ≠ -1` guard band.
    pub fn validate(&self) -> Result<()> {
        let (o, i) = self.curves();
        check_pair(&o, &i)?;
        if (1.0 + self.lambda1).abs() < LAMBDA_GUARD {
            return Err(Error::Input(format!("lambda1 = {} is inside the guard band around -1", self.lambda1)));
        }
        Ok(())
    }

    /// Switches the active parametrization; `λ1` and `τ1` are untouched.
    pub fn switch_form(&mut self, form: ParamForm) {
        self.form = form;
    }

    /// Transmission parameters at exterior wavenumber `k0`.
    pub fn medium(&self, k0: f64, config: &SolverConfig) -> Result<MediumParams> {
        let k1 = k0 * config.n1.sqrt();
        let k2 = config.k2_rule.k2(k0, k1);
        match self.form {
            ParamForm::Lambda => MediumParams::new(k0, k1, k2, config.lambda0, self.lambda1),
            ParamForm::Tau => MediumParams::with_tau(k0, k1, k2, config.lambda0, self.tau1),
        }
    }

    pub fn value(&self, p: Parameter) -> f64 {
        match p {
            Parameter::R0(i) => self.gamma0.coeffs()[i],
            Parameter::R1(i) => self.gamma1.coeffs()[i],
            Parameter::Center(a) => self.gamma1.center[a],
            Parameter::Lambda1 => self.lambda1,
            Parameter::Tau1 => self.tau1,
        }
    }

    /// `state + Δc` with `λ1·τ1 = 1` restored, without validation.
    pub fn updated(&self, params: &[Parameter], delta: &[f64]) -> Result<Self> {
        let mut c0 = self.gamma0.coeffs().to_vec();
        let mut c1 = self.gamma1.coeffs().to_vec();
        let mut center = self.gamma1.center;
        let (mut lambda1, mut tau1) = (self.lambda1, self.tau1);
        for (p, d) in params.iter().zip(delta) {
            match *p {
                Parameter::R0(i) => c0[i] += d,
                Parameter::R1(i) => c1[i] += d,
                Parameter::Center(a) => center[a] += d,
                Parameter::Lambda1 => {
                    lambda1 += d;
                    tau1 = 1.0 / lambda1;
                }
                Parameter::Tau1 => {
                    tau1 += d;
                    lambda1 = 1.0 / tau1;
                }
            }
        }
        if !(lambda1.is_finite() && tau1.is_finite() && lambda1 != 0.0) {
            return Err(Error::Input("step drives lambda1 or tau1 to a non-finite value".into()));
        }
        Ok(Self {
            gamma0: StarlikeShape::new_unchecked([0.0, 0.0], c0)?,
            gamma1: StarlikeShape::new_unchecked(center, c1)?,
            lambda1,
            tau1,
            form: self.form,
        })
    }
}

/// How `k2` follows the exterior wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum K2Rule {
    /// `k2 = k1`.
    EqualK1,
    /// `k2 = k0 √n2`.
    RefractiveIndex { n2: f64 },
}

impl K2Rule {
    pub fn k2(&self, k0: f64, k1: f64) -> f64 {
        match self {
            K2Rule::EqualK1 => k1,
            K2Rule::RefractiveIndex { n2 } => k0 * n2.sqrt(),
        }
    }
}

/// Iterations on which the inner center is an unknown. Counted over all frequency stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterSchedule {
    Every,
    Never,
    /// Only the first `n` iterations.
    First(usize),
}

impl CenterSchedule {
    pub fn active(&self, global_iteration: usize) -> bool {
        match *self {
            CenterSchedule::Every => true,
            CenterSchedule::Never => false,
            CenterSchedule::First(n) => global_iteration < n,
        }
    }
}

fn default_n1() -> f64 {
    0.64
}
fn default_lambda0() -> f64 {
    1.2
}
fn default_s() -> f64 {
    1.6
}
fn default_degree() -> usize {
    25
}
fn default_rho() -> f64 {
    0.8
}
fn default_tau() -> f64 {
    1.5
}
fn default_lambda_switch() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    25
}
fn default_n_obs() -> usize {
    64
}
fn default_n_solve() -> usize {
    64
}
fn default_n_synth() -> usize {
    128
}
fn default_center() -> CenterSchedule {
    CenterSchedule::Every
}
fn default_k2() -> K2Rule {
    K2Rule::EqualK1
}

/// Solver settings. `frequencies` and `incident_directions` have no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_n1")]
    pub n1: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    /// Sobolev index of the shape penalty.
    #[serde(default = "default_s")]
    pub s: f64,
    /// Trigonometric degree `M` of both radius functions.
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Discrepancy factor of the stopping rule `Err < τδ`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// `|λ1|` above which the iteration works in `τ1 = 1/λ1`.
    #[serde(default = "default_lambda_switch")]
    pub lambda_switch: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub frequencies: Vec<f64>,
    pub incident_directions: usize,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    #[serde(default = "default_n_solve")]
    pub n_solve: usize,
    #[serde(default = "default_n_synth")]
    pub n_synth: usize,
    #[serde(default = "default_center")]
    pub center_updates: CenterSchedule,
    #[serde(default = "default_k2")]
    pub k2_rule: K2Rule,
}

impl SolverConfig {
    /// Defaults with the given frequencies and number of incident waves.
    pub fn new(frequencies: Vec<f64>, incident_directions: usize) -> Self {
        Self {
            n1: default_n1(),
            lambda0: default_lambda0(),
            s: default_s(),
            degree: default_degree(),
            rho: default_rho(),
            tau: default_tau(),
            lambda_switch: default_lambda_switch(),
            delta: 0.0,
            max_iterations: default_max_iterations(),
            frequencies,
            incident_directions,
            n_obs: default_n_obs(),
            n_solve: default_n_solve(),
            n_synth: default_n_synth(),
            center_updates: default_center(),
            k2_rule: default_k2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.tau > 1.0) {
            return bad(format!("tau must exceed 1, got {}", self.tau));
        }
        if !(self.delta >= 0.0) {
            return bad(format!("delta must be nonnegative, got {}", self.delta));
        }
        if !(self.n1 > 0.0 && self.lambda0 > 0.0 && self.lambda_switch > 0.0 && self.s >= 0.0) {
            return bad("n1, lambda0 and lambda_switch must be positive, s nonnegative".into());
        }
        if self.frequencies.is_empty() {
            return bad("frequencies must not be empty".into());
        }
        if self.frequencies.iter().any(|k| !(*k > 0.0)) || self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("frequencies must be positive and strictly increasing, got {:?}", self.frequencies));
        }
        if self.incident_directions == 0 || self.n_obs == 0 {
            return bad("incident_directions and n_obs must be positive".into());
        }
        if self.n_solve < 8 || self.n_synth < 8 {
            return bad("n_solve and n_synth must be at least 8".into());
        }
        if let K2Rule::RefractiveIndex { n2 } = self.k2_rule {
            if !(n2 > 0.0) {
                return bad(format!("n2 must be positive, got {n2}"));
            }
        }
        Ok(())
    }
}

/// `2π α0² + π Σ_l (1+l²)^s (α_l² + α_{l+M}²)`.
pub fn hs_norm_sq(coeffs: &[f64], s: f64) -> f64 {
    let m = coeffs.len() / 2;
    let modes: f64 = (1..=m)
        .map(|l| (1.0 + (l * l) as f64).powf(s) * (coeffs[l].powi(2) + coeffs[l + m].powi(2)))
        .sum();
    2.0 * PI * coeffs[0].powi(2) + PI * modes
}

/// `(2π/n) Σ |f_i|²`.
pub fn discrete_l2_sq(values: &[Complex64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    2.0 * PI / values.len() as f64 * values.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Diagonal of the penalty `D` for the given unknowns.
pub fn penalty_weights(params: &[Parameter], degree: usize, s: f64) -> Vec<f64> {
    let mode = |i: usize| {
        if i == 0 {
            2.0 * PI
        } else {
            let l = if i <= degree { i } else { i - degree };
            PI * (1.0 + (l * l) as f64).powf(s)
        }
    };
    params
        .iter()
        .map(|p| match *p {
            Parameter::R0(i) | Parameter::R1(i) => mode(i),
            _ => 1.0,
        })
        .collect()
}

/// Precomputed normal-equation pieces for repeated solves with different `β`.
pub struct LmProblem<'a> {
    pub jacobian: &'a DMatrix<f64>,
    pub residual: &'a DVector<f64>,
    pub weights: &'a [f64],
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
}

impl<'a> LmProblem<'a> {
    pub fn new(jacobian: &'a DMatrix<f64>, residual: &'a DVector<f64>, weights: &'a [f64]) -> Result<Self> {
        if jacobian.nrows() != residual.len() || jacobian.ncols() != weights.len() {
            return Err(Error::Input("Jacobian, residual and penalty dimensions disagree".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Input("penalty weights must be positive".into()));
        }
        Ok(Self {
            jtj: jacobian.tr_mul(jacobian),
            jtr: jacobian.tr_mul(residual),
            jacobian,
            residual,
            weights,
        })
    }

    /// `argmin ‖JΔ + r‖² + β ΔᵀDΔ`.
    pub fn step(&self, beta: f64) -> Result<DVector<f64>> {
        let mut a = self.jtj.clone();
        for (i, w) in self.weights.iter().enumerate() {
            a[(i, i)] += beta * w;
        }
        let chol = a.cholesky().ok_or(Error::Singular { condition: f64::INFINITY })?;
        Ok(-chol.solve(&self.jtr))
    }

    /// `‖JΔ(β) + r‖`.
    pub fn linear_residual(&self, beta: f64) -> Result<f64> {
        let d = self.step(beta)?;
        Ok((self.jacobian * d + self.residual).norm())
    }

    /// `min_Δ ‖JΔ + r‖`, the limit of the linearized residual as `β → 0⁺`.
    pub fn least_squares_residual(&self) -> f64 {
        let svd = self.jacobian.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.max();
        let tol = smax * 1e-13 * self.jacobian.nrows().max(self.jacobian.ncols()) as f64;
        let mut proj = self.residual.clone();
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s > tol {
                let col = u.column(k);
                proj -= col * col.dot(self.residual);
            }
        }
        proj.norm()
    }
}

/// One LM step for a fixed `β`.
pub fn lm_step(jacobian: &DMatrix<f64>, residual: &DVector<f64>, beta: f64, weights: &[f64]) -> Result<DVector<f64>> {
    LmProblem::new(jacobian, residual, weights)?.step(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaChoice {
    pub beta: f64,
    /// `‖JΔ + r‖ / ‖r‖` at the chosen `β`.
    pub linear_ratio: f64,
    /// Set when `ρ‖r‖` lies below the least-squares residual.
    pub infeasible: bool,
}

/// Chooses `β` with `‖JΔ(β) + r‖ = ρ‖r‖` (relative tolerance 1e-3) by bracket
/// doubling and bisection in `log β`.
pub fn choose_beta(problem: &LmProblem, rho: f64) -> Result<BetaChoice> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!("rho must lie in (0, 1), got {rho}")));
    }
    let rnorm = problem.residual.norm();
    if rnorm == 0.0 {
        return Ok(BetaChoice {
            beta: BETA_MIN,
            linear_ratio: 0.0,
            infeasible: false,
        });
    }
    let target = rho * rnorm;
    if problem.least_squares_residual() >= target * (1.0 - 1e-3) {
        let ratio = problem.linear_residual(BETA_MIN).map(|r| r / rnorm).unwrap_or(f64::NAN);
        return Ok(BetaChoice {
            beta: BETA_MIN,
            linear_ratio: ratio,
            infeasible: true,
        });
    }
    let f = |b: f64| problem.linear_residual(b);
    let trace: f64 = (0..problem.weights.len()).map(|i| problem.jtj[(i, i)]).sum();
    let dsum: f64 = problem.weights.iter().sum();
    let mut hi = (trace / dsum).max(BETA_MIN);
    let mut lo = hi;
    while f(hi)? < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Input("discrepancy bracket diverged".into()));
        }
    }
    while lo > BETA_MIN && f(lo)? > target {
        lo = (lo / 2.0).max(BETA_MIN);
    }
    if lo >= hi {
        lo = hi / 2.0;
    }
    let mut beta = hi;
    let mut value = f(hi)?;
    for _ in 0..200 {
        if (value - target).abs() <= 1e-3 * target || hi / lo < 1.0 + 1e-12 {
            break;
        }
        beta = (lo * hi).sqrt();
        value = f(beta)?;
        if value > target {
            hi = beta;
        } else {
            lo = beta;
        }
    }
    Ok(BetaChoice {
        beta,
        linear_ratio: value / rnorm,
        infeasible: false,
    })
}

/// `(1/P) Σ ‖F_i - u_i‖ / ‖u_i‖` in the discrete `L²` norm.
pub fn relative_error(current: &[Vec<Complex64>], data: &[Vec<Complex64>]) -> Result<f64> {
    if current.is_empty() || current.len() != data.len() {
        return Err(Error::Input("far-field and data column counts differ or are zero".into()));
    }
    let mut sum = 0.0;
    for (i, (f, u)) in current.iter().zip(data).enumerate() {
        if f.len() != u.len() {
            return Err(Error::Input(format!("column {i}: {} samples vs {} data samples", f.len(), u.len())));
        }
        let norm = discrete_l2_sq(u).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!("data column {i} has zero norm")));
        }
        let diff: Vec<Complex64> = f.iter().zip(u).map(|(a, b)| a - b).collect();
        sum += discrete_l2_sq(&diff).sqrt() / norm;
    }
    Ok(sum / current.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    SoundSoft,
    SoundHard,
    Inconclusive,
}

pub fn classify_boundary(state: &ShapeState) -> BoundaryClass {
    let l = state.lambda1.abs();
    if l >= SOUND_SOFT_THRESHOLD {
        BoundaryClass::SoundSoft
    } else if l <= SOUND_HARD_THRESHOLD {
        BoundaryClass::SoundHard
    } else {
        BoundaryClass::Inconclusive
    }
}

/// One row of the trace: the state at the start of an iteration and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k0: f64,
    /// Iteration index within the frequency stage.
    pub iteration: usize,
    pub state: ShapeState,
    pub err: f64,
    /// `None` when no step was taken.
    pub beta: Option<f64>,
    pub infeasible: bool,
    pub form_switched: bool,
    pub center_updated: bool,
    pub halvings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    ErrorFloor,
    MaxIterations,
    /// The geometry safeguard was exhausted or the forward solve failed.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub k0: f64,
    pub iterations: usize,
    pub err: f64,
    pub stop: StopReason,
    pub state: ShapeState,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTrace {
    pub iterations: Vec<IterationRecord>,
    pub stages: Vec<StageSummary>,
    pub classification: BoundaryClass,
}

/// Forward solves at one state.
pub struct Evaluation {
    pub system: TransmissionSystem,
    pub solutions: Vec<PlaneWaveSolution>,
    pub far_fields: Vec<Vec<Complex64>>,
    pub err: f64,
}

pub fn evaluate(state: &ShapeState, data: &FarField, config: &SolverConfig) -> Result<Evaluation> {
    let params = state.medium(data.k0, config)?;
    let (o, i) = state.curves();
    let system = crate::forward::assemble_system(&o, &i, config.n_solve, &params)?;
    let solutions: Vec<PlaneWaveSolution> = data
        .incident
        .iter()
        .map(|&d| system.solve_plane_wave(d, &data.observation))
        .collect::<Result<_>>()?;
    let far_fields: Vec<Vec<Complex64>> = solutions.iter().map(|s| s.far_field.clone()).collect();
    let err = relative_error(&far_fields, &data_columns(data))?;
    Ok(Evaluation {
        system,
        solutions,
        far_fields,
        err,
    })
}

/// Columns of a far-field matrix, one per incident direction.
pub fn data_columns(data: &FarField) -> Vec<Vec<Complex64>> {
    (0..data.values.ncols()).map(|j| data.values.column(j).iter().copied().collect()).collect()
}

/// Result of one frequency stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub state: ShapeState,
    pub records: Vec<IterationRecord>,
    pub summary: StageSummary,
}

/// Newton iterations at one frequency. `global_offset` is the number of iterations
/// already taken at earlier frequencies (used by the center schedule).
pub fn newton_iteration(
    initial: &ShapeState,
    data: &FarField,
    config: &SolverConfig,
    global_offset: usize,
) -> Result<StageResult> {
    config.validate()?;
    initial.validate()?;
    let columns = data_columns(data);
    let degree = initial.degree();
    let mut state = initial.clone();
    let mut eval = evaluate(&state, data, config)?;
    let mut records = Vec::new();
    let mut m = 0;
    let stop = loop {
        let mut record = IterationRecord {
            k0: data.k0,
            iteration: m,
            state: state.clone(),
            err: eval.err,
            beta: None,
            infeasible: false,
            form_switched: false,
            center_updated: false,
            halvings: 0,
        };
        if eval.err < config.tau * config.delta {
            records.push(record);
            break (StopReason::Discrepancy, None);
        }
        if eval.err < ERR_FLOOR {
            records.push(record);
            break (StopReason::ErrorFloor, None);
        }
        if m >= config.max_iterations {
            records.push(record);
            break (StopReason::MaxIterations, None);
        }

        let form = if state.lambda1.abs() <= config.lambda_switch {
            ParamForm::Lambda
        } else {
            ParamForm::Tau
        };
        if form != state.form {
            record.form_switched = true;
            state.switch_form(form);
            record.state.form = form;
            eval = evaluate(&state, data, config)?;
        }
        let center = config.center_updates.active(global_offset + m);
        record.center_updated = center;
        let params = canonical_parameters(degree, form, center);
        let jac = jacobian(&eval.system, &eval.solutions, &params, degree, &data.observation)?;
        let diff: Vec<Vec<Complex64>> = eval
            .far_fields
            .iter()
            .zip(&columns)
            .map(|(f, u)| f.iter().zip(u).map(|(a, b)| a - b).collect())
            .collect();
        let residual = DVector::from_vec(stack_real(&diff));
        let weights = penalty_weights(&params, degree, config.s);
        let problem = LmProblem::new(&jac.matrix, &residual, &weights)?;
        let choice = choose_beta(&problem, config.rho)?;
        let step = problem.step(choice.beta)?;
        record.beta = Some(choice.beta);
        record.infeasible = choice.infeasible;

        let mut scale = 1.0;
        let mut accepted = None;
        let mut last_error = None;
        for h in 0..=MAX_HALVINGS {
            let delta: Vec<f64> = step.iter().map(|d| d * scale).collect();
            let trial = state.updated(&params, &delta).and_then(|t| t.validate().map(|_| t));
            match trial.and_then(|t| evaluate(&t, data, config).map(|e| (t, e))) {
                Ok(pair) => {
                    record.halvings = h;
                    accepted = Some(pair);
                    break;
                }
                Err(e) => {
                    log::debug!("k0={} iteration {m}: step rejected ({e}), halving", data.k0);
                    last_error = Some(e);
                    scale *= 0.5;
                }
            }
        }
        match accepted {
            Some((s, e)) => {
                records.push(record);
                state = s;
                eval = e;
                m += 1;
                log::info!(
                    "k0={} iteration {m}: Err={:.4e} lambda1={:.4e} beta={:.3e}",
                    data.k0,
                    eval.err,
                    state.lambda1,
                    choice.beta
                );
            }
            None => {
                record.halvings = MAX_HALVINGS;
                records.push(record);
                break (StopReason::Aborted, last_error.map(|e| e.to_string()));
            }
        }
    };
    Ok(StageResult {
        summary: StageSummary {
            k0: data.k0,
            iterations: m,
            err: eval.err,
            stop: stop.0,
            state: state.clone(),
            message: stop.1,
        },
        state,
        records,
    })
}

/// Runs [`newton_iteration`] for each frequency in increasing order, starting
/// each stage from the previous stage's final state.
pub fn multi_frequency_drive(
    initial: &ShapeState,
    data: &[FarField],
    config: &SolverConfig,
) -> Result<(ShapeState, ReconstructionTrace)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("no far-field data".into()));
    }
    if data.windows(2).any(|w| w[1].k0 <= w[0].k0) {
        return Err(Error::Input("data frequencies must be strictly increasing".into()));
    }
    let mut state = initial.clone();
    let mut iterations = Vec::new();
    let mut stages = Vec::new();
    let mut taken = 0;
    for stage_data in data {
        let stage = newton_iteration(&state, stage_data, config, taken)?;
        taken += stage.summary.iterations;
        state = stage.state;
        iterations.extend(stage.records);
        stages.push(stage.summary);
    }
    let classification = classify_boundary(&state);
    Ok((
        state,
        ReconstructionTrace {
            iterations,
            stages,
            classification,
        },
    ))
}

/// Relative error of one Jacobian column against central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnCheck {
    pub parameter: Parameter,
    pub relative_error: f64,
    /// Euclidean norm of the finite-difference column.
    pub column_norm: f64,
}

/// Compares every Jacobian column at `state` with central differences of step `step`,
/// at exterior wavenumber `k0` with `config.incident_directions` waves and `config.n_obs`
/// observation points. Differencing in `λ1` or `τ1` follows the active form.
pub fn jacobian_check(state: &ShapeState, k0: f64, config: &SolverConfig, step: f64) -> Result<Vec<ColumnCheck>> {
    if !(step > 0.0) {
        return Err(Error::Input(format!("step must be positive, got {step}")));
    }
    let incident = crate::operators::unit_directions(config.incident_directions);
    let observation = crate::operators::unit_directions(config.n_obs);
    let far_field = |s: &ShapeState| -> Result<Vec<f64>> {
        let (o, i) = s.curves();
        let system = crate::forward::assemble_system(&o, &i, config.n_solve, &s.medium(k0, config)?)?;
        let cols: Vec<Vec<Complex64>> = incident
            .iter()
            .map(|&d| system.solve_plane_wave(d, &observation).map(|p| p.far_field))
            .collect::<Result<_>>()?;
        Ok(stack_real(&cols))
    };
    let (o, i) = state.curves();
    let system = crate::forward::assemble_system(&o, &i, config.n_solve, &state.medium(k0, config)?)?;
    let solutions: Vec<PlaneWaveSolution> = incident
        .iter()
        .map(|&d| system.solve_plane_wave(d, &observation))
        .collect::<Result<_>>()?;
    let params = canonical_parameters(state.degree(), state.form, true);
    let jac = jacobian(&system, &solutions, &params, state.degree(), &observation)?;
    params
        .iter()
        .enumerate()
        .map(|(col, &p)| {
            let plus = far_field(&state.updated(&[p], &[step])?)?;
            let minus = far_field(&state.updated(&[p], &[-step])?)?;
            let (mut num, mut den) = (0.0, 0.0);
            for (r, (a, b)) in plus.iter().zip(&minus).enumerate() {
                let fd = (a - b) / (2.0 * step);
                num += (fd - jac.matrix[(r, col)]).powi(2);
                den += fd * fd;
            }
            Ok(ColumnCheck {
                parameter: p,
                relative_error: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
                column_norm: den.sqrt(),
            })
        })
        .collect()
}
