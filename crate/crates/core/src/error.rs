use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid representation spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, threshold {threshold:e})")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },

    #[error("{0} requires an even N, got {1}")]
    OddOrder(&'static str, usize),

    #[error("closed-form cryo-EM K requires R >= 2L+1 (L = {l}, R = {r})")]
    CryoRegime { l: usize, r: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("not a skew pair: defect {defect:e} exceeds {threshold:e}")]
    NotSkewPair { defect: f64, threshold: f64 },

    #[error("latent point lies on an activation boundary (layer {layer}, unit {unit})")]
    ActivationBoundary { layer: usize, unit: usize },

    #[error("chart has no directions")]
    EmptyChart,

    #[error("linear map is singular")]
    SingularMap,

    #[error("every sampled pair was degenerate")]
    AllDegenerate,

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
