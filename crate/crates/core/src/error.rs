use thiserror::Error;

/// Errors raised by the forward solver, the reconstruction loop and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("degenerate curve: |x'(t)| = {speed:e} at node {node}")]
    DegenerateCurve { node: usize, speed: f64 },

    #[error("argument outside the domain of {function}: {value}")]
    Domain { function: &'static str, value: f64 },

    #[error("fundamental solution evaluated at coincident points (|x-y| = {0:e})")]
    Singularity(f64),

    #[error("linear system is singular to working precision (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("reconstruction stage at k0={k0} aborted: {reason}")]
    StageAborted { k0: f64, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Singularity(_)
                | Error::DegenerateCurve { .. }
                | Error::StageAborted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
