use thiserror::Error;

/// Errors raised across the simulator and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("two lasers drive the {0} transition; the rotating frame is ambiguous")]
    DuplicateLaser(&'static str),

    #[error("integrator diverged at t = {t} ns: step size fell below {min_step} ns")]
    Divergence { t: f64, min_step: f64 },

    #[error("steady state is not unique: null space has dimension {dimension}")]
    DegenerateNullSpace { dimension: usize },

    #[error("cyclic fixed point did not converge after {iterations} periods (last change {last_change:e})")]
    NoFixedPoint { iterations: usize, last_change: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("incompatible inputs: {0}")]
    Mismatch(String),

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("stream format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::DegenerateNullSpace { .. }
                | Error::NoFixedPoint { .. }
                | Error::Fit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

