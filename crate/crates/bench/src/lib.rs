//! Shared fixtures for the benchmarks in `benches/`.

use twolayer_core::frechet::{canonical_parameters, Parameter};
use twolayer_core::operators::unit_directions;
use twolayer_core::{MediumParams, ParamForm, ParametricCurve};

/// Rounded-triangle outer boundary around an apple-shaped inner boundary, `k0 = 2`.
pub fn apple_in_triangle() -> (ParametricCurve, ParametricCurve, MediumParams) {
    let outer = ParametricCurve::preset("rounded_triangle").expect("preset");
    let inner = ParametricCurve::preset("apple").expect("preset");
    let params = MediumParams::from_refractive_index(2.0, 0.64, 1.2, 10.0).expect("medium");
    (outer, inner, params)
}

pub fn observation(n_obs: usize) -> Vec<[f64; 2]> {
    unit_directions(n_obs)
}

pub fn parameters(degree: usize) -> Vec<Parameter> {
    canonical_parameters(degree, ParamForm::Lambda, true)
}
