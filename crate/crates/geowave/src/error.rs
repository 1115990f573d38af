//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({0}, {1}) is outside the chart bounds")]
    OutOfDomain(f64, f64),

    #[error("geodesic left the chart at parameter {0}")]
    GeodesicLeftChart(f64),

    #[error("{what} failed to converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("grid too coarse for {what}: need at least {required}, have {actual}")]
    GridTooCoarse {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("CFL ratio {0} must lie in (0, 1)")]
    CflViolation(f64),

    #[error("wave field blew up at step {step}: norm {norm:.3e} exceeds energy bound")]
    Instability { step: usize, norm: f64 },

    #[error("invalid parameter {name}: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("extraction out of range: 1 + Re S = {0:.3e} is not positive (noise dominates signal at this h)")]
    ExtractionOutOfRange(f64),

    #[error("probe set is empty")]
    EmptyProbeSet,

    #[error("degenerate sweep: {0}")]
    DegenerateSweep(String),

    #[error("ray coverage too low: {failed} of {total} extractions failed")]
    CoverageTooLow { failed: usize, total: usize },

    #[error("mode {mode} does not allow {operation}")]
    ModeGated {
        mode: &'static str,
        operation: &'static str,
    },

    #[error("time horizon {horizon} too short: need horizon > {required} so every ray clears the domain")]
    HorizonTooShort { horizon: f64, required: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
