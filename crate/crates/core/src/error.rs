use thiserror::Error;

use crate::calibration::CalibrationResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tenor {tenor} outside curve range (0, {max}]")]
    OutOfRange { tenor: f64, max: f64 },

    #[error("degenerate credit: risky PV01 is zero (default certain over the whole horizon)")]
    DegenerateCredit,

    #[error("empty sample")]
    EmptySample,

    #[error("barrier level {0} not present in crossing records")]
    MissingBarrier(f64),

    #[error("missing parameters: {0}")]
    MissingParameters(String),

    #[error("underdetermined: {0}")]
    Underdetermined(String),

    #[error("calibration of {label} did not converge: objective {objective:.4} at sigma={sigma:.4}, xi={xi:.4}", label = .0.label, objective = .0.objective, sigma = .0.sigma, xi = .0.xi)]
    NonConvergence(Box<CalibrationResult>),

    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
