//! Crate-wide error type.
//!
//! Input problems (bad spec, malformed file, inconsistent series) are kept
//! distinct from numeric failures (overflow, insufficient decay, CFL) so the
//! CLI can map them to different exit codes.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A generator or window specification is unusable before any data is touched.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Configuration file or key/value input is malformed.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed table input; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    /// The series failed validation; the report carries the details.
    #[error("series rejected: {violations} violation(s), first: {first}")]
    SeriesRejected { violations: usize, first: String },

    /// A window sum that must be positive (volume, past value) is not.
    #[error("degenerate window for {company} at window {window}: {what} is not positive")]
    DegenerateWindow {
        company: String,
        window: usize,
        what: &'static str,
    },

    /// |x|^m would leave f64 range; the caller picked m too large for the data.
    #[error("moment overflow at order {m}: |value| up to {max_abs:.3e}")]
    MomentOverflow { m: usize, max_abs: f64 },

    #[error("insufficient data: need {needed} steps, have {available}")]
    InsufficientData { needed: u64, available: u64 },

    /// Two computation routes for the same quantity disagree beyond tolerance.
    #[error("consistency check failed for {what}: relative deviation {relative:.3e}")]
    ConsistencyCheck { what: &'static str, relative: f64 },

    #[error("transition matrix row {row} sums to {sum} (must be 1 within 1e-12)")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("transition grades must be strictly increasing within [0, 1]")]
    BadGrades,

    /// A density or grid scale needs a positive variance and none exists.
    #[error("variance non-positive: {variance}")]
    NonPositiveVariance { variance: f64 },

    /// The characteristic function does not fall below the decay threshold
    /// before the cutoff search gives up.
    #[error("characteristic function decays too slowly: envelope {envelope:.3e} at x = {x:.3e}")]
    InsufficientDecay { x: f64, envelope: f64 },

    /// Recovered density has more negative mass than the budget allows.
    #[error("density negative mass {mass:.3e} exceeds budget {budget:.1e}")]
    ExcessNegativeMass { mass: f64, budget: f64 },

    #[error("time step {dt:.3e} violates the CFL bound; max admissible dt = {dt_max:.3e}")]
    CflViolation { dt: f64, dt_max: f64 },

    /// A mean over a field with no mass is undefined.
    #[error("zero total mass: {0}")]
    ZeroMass(&'static str),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by what the caller handed in, as opposed to a
    /// computation that failed on acceptable input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
                | Error::Io { .. }
                | Error::Parse { .. }
                | Error::SeriesRejected { .. }
                | Error::NonStochasticRow { .. }
                | Error::BadGrades
        )
    }
}
