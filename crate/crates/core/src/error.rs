use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs that must agree in length or layout do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("infeasible band [{lo_hz:.4e}, {hi_hz:.4e}] Hz: nearest achievable f_c is {nearest_fc_hz:.6e} Hz")]
    InfeasibleBand { lo_hz: f64, hi_hz: f64, nearest_fc_hz: f64 },

    #[error("tag not detected: {0}")]
    TagNotDetected(String),

    #[error("tag not resolved: {0}")]
    TagNotResolved(String),

    #[error("degenerate signal subspace: {num_sources} sources requested but covariance rank is {rank}")]
    DegenerateSubspace { num_sources: usize, rank: usize },

    /// Training data cannot support a model.
    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    /// Bad configuration or command-line usage.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for usage and configuration problems, 2 for
    /// domain or infeasibility failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}
