//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh generation failed: {0}")]
    MeshGeneration(String),

    #[error("mesh i/o: {0}")]
    MeshIo(String),

    #[error("constitutive domain error: {0}")]
    Domain(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("inconsistent constraints: dof {dof} prescribed as both {a} and {b}")]
    InconsistentConstraints { dof: usize, a: f64, b: f64 },

    #[error("matrix is singular or not positive definite at pivot {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("Newton did not converge: {iterations} iterations, residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("staggered loop did not converge after {iterations} sweeps (u: {res_u:.3e}, d: {res_d:.3e})")]
    StaggerNonConvergence {
        iterations: usize,
        res_u: f64,
        res_d: f64,
    },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("no localized 1D profile found for rho = {rho}")]
    NoLocalizedProfile { rho: f64 },

    #[error("calibration failed for {model:?} at l/h = {ell_over_h}: {reason}")]
    Calibration {
        model: crate::model::Dissipation,
        ell_over_h: f64,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
