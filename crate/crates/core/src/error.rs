use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("T0*fs = {0} is not a positive even integer")]
    NonIntegerSampleCount(f64),

    #[error("{name} must be positive (got {value})")]
    NonPositiveInput { name: &'static str, value: f64 },

    #[error("index {index} outside {min}..={max}")]
    IndexOutOfRange { index: i64, min: i64, max: i64 },

    #[error("doppler shift {nu} Hz is outside the interpolation range |nu| < {limit} Hz")]
    DopplerOutOfRange { nu: f64, limit: f64 },

    #[error("noise covariance is singular: bin {bin} has power {value:e} (max {max:e})")]
    SingularCovariance { bin: i64, value: f64, max: f64 },

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("code length {got} does not match the required {expected} chips")]
    CodeLengthMismatch { expected: usize, got: usize },

    #[error("reference bandwidth {b_ref} Hz outside (0, {b_max}] Hz")]
    BandwidthOutOfRange { b_ref: f64, b_max: f64 },

    #[error("signal has no energy under the noise metric")]
    ZeroSignal,

    #[error("covariance factorization failed (min eigenvalue {0:e})")]
    FactorizationFailure(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::NonIntegerSampleCount(_)
                | Error::NonPositiveInput { .. }
                | Error::Config(_)
                | Error::BandwidthOutOfRange { .. }
                | Error::CodeLengthMismatch { .. }
                | Error::LengthMismatch { .. }
        )
    }
}
