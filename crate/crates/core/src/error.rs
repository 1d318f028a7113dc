use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidSpec(String),

    #[error("aliasing: {what} at {freq_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    Aliasing {
        what: String,
        freq_hz: f64,
        nyquist_hz: f64,
    },

    #[error("unknown tap '{0}' (valid taps: P1-P7)")]
    UnknownTap(String),

    #[error("unknown conductor '{0}' (valid conductors: L1, L2, L3, N)")]
    UnknownConductor(String),

    #[error("unknown section '{0}' (valid sections: I, II, III, IV, V, VI)")]
    UnknownSection(String),

    #[error("unknown preset '{name}' (catalog: {catalog})")]
    UnknownPreset { name: String, catalog: String },

    #[error("nonlinear element: {0}")]
    NonlinearElement(String),

    #[error("diode state iteration did not converge at t = {t:.6} s after {iterations} iterations")]
    NonConvergence { t: f64, iterations: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e} at t = {t:.6} s")]
    Residual {
        t: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("window too short: {0}")]
    ShortWindow(String),

    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("non-integer samples per window: {0}")]
    NonSynchronous(String),

    #[error("no dominant fundamental: {0}")]
    NoFundamental(String),

    #[error("gap in window sequence at t = {0:.6} s")]
    WindowGap(f64),

    #[error("ingest error at line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("scenario '{name}': {source}")]
    Scenario { name: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        if let Error::Scenario { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::Aliasing { .. }
                | Error::UnknownTap(_)
                | Error::UnknownConductor(_)
                | Error::UnknownSection(_)
                | Error::UnknownPreset { .. }
                | Error::Parse { .. }
                | Error::Ingest { .. }
                | Error::NonSynchronous(_)
                | Error::LengthMismatch(..)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
