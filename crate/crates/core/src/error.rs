//! Crate-wide error type. Numerical guards (Lorentzian floor, singular
//! reduction determinant) surface here so callers can map them to exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("domain error in `{node}`: {msg}")]
    ExprDomain { node: String, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("metric fails the Lorentzian condition at {point:?}: H = {h:.6e}")]
    NonLorentzian { point: Vec<f64>, h: f64 },

    #[error("gamma undefined at {point:?}: A - C = {diff:.6e}")]
    GammaUndefined { point: Vec<f64>, diff: f64 },

    #[error("base metric not positive definite at {point:?}: min eigenvalue {eig:.6e}")]
    NotPositiveDefinite { point: Vec<f64>, eig: f64 },

    #[error("singular reduction: |L| = {l_abs:.6e} at or below floor {floor:.0e}")]
    SingularL { l_abs: f64, floor: f64 },

    #[error("internal consistency failure: {0}")]
    Inconsistency(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("preset mismatch: {0}")]
    PresetMismatch(String),

    #[error("shooting failed after {iterations} iterations: best residual {best_residual:.6e}")]
    ShootingFailed { iterations: usize, best_residual: f64 },

    #[error("line search stalled after {rejections} consecutive step rejections")]
    StepRejected { rejections: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv format error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
