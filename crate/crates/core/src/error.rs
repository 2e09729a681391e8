use thiserror::Error;

/// Failures raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("parameter `{name}` = {value} is outside {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("quadrature for {what} did not converge (error estimate {estimate:e})")]
    Quadrature { what: &'static str, estimate: f64 },

    #[error("kernel mass rescaling factor {0} deviates from 1 by more than 1e-3")]
    Rescale(f64),

    #[error("kernel symbol is not positive at mode {mode} (real part {value:e}); refine the grid")]
    NonPositiveSymbol { mode: usize, value: f64 },

    #[error("grid spacing {grid} does not match kernel table spacing {table}")]
    SpacingMismatch { grid: f64, table: f64 },

    #[error("field lives on {found}, expected {expected}")]
    Support {
        expected: &'static str,
        found: &'static str,
    },

    #[error("field values are not finite")]
    NonFinite,

    #[error("matrix is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("{method} did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("columns are linearly dependent (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("input is not constant on the closure of Omega (spread {0:e})")]
    NotConstant(f64),

    #[error("torus is too small: {0}")]
    Torus(String),

    #[error("uniqueness check failed: Omega-mean {0:e} of the unit-constant solution is zero")]
    Uniqueness(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
