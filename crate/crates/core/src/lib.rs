//! Forward and inverse solvers for time-harmonic acoustic scattering by a
//! penetrable obstacle with a buried obstacle inside.
//!
//! The forward problem is the two-interface transmission problem
//!
//! ```text
//! Δu + k0² u = 0 in Ω0,   Δu + k1² u = 0 in Ω1,   Δu + k2² u = 0 in Ω2,
//! u+ = u-,  ∂u+/∂ν = λ0 ∂u-/∂ν  on S0,
//! u+ = u-,  ∂u+/∂ν = λ1 ∂u-/∂ν  on S1,
//! ```
//!
//! solved by a Nyström discretization of a 4×4 system of boundary integral
//! equations. The inverse solver recovers `S0`, `S1` and `λ1` from far-field
//! data with a Levenberg–Marquardt iteration; the recovered `λ1` tells whether
//! the buried obstacle behaves as sound-soft (`λ1 → ∞`) or sound-hard (`λ1 → 0`).

pub mod data_io;
pub mod error;
pub mod forward;
pub mod frechet;
pub mod geometry;
pub mod inverse;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod specfun;

pub use error::{Error, Result};
pub use forward::{BoundaryData, DensityVector, FarField, MediumParams, ParamForm};
pub use geometry::{DiscretizedBoundary, ParametricCurve, Preset, StarlikeShape};
pub use inverse::{BoundaryClass, ReconstructionTrace, ShapeState, SolverConfig};

pub use num_complex::Complex64;
