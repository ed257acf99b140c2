use thiserror::Error;

/// Errors raised by the model layer (physics, channel synthesis, allocation,
/// baselines and localization).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid waveguide geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    /// The guided mode is evanescent at this frequency.
    #[error("frequency {freq_hz:.6e} Hz is at or below the cutoff {cutoff_hz:.6e} Hz")]
    BelowCutoff { freq_hz: f64, cutoff_hz: f64 },

    #[error("angle {angle_deg} deg is outside the supported range {range}")]
    AngleOutOfRange { angle_deg: f64, range: &'static str },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("nothing to allocate: every effective gain is zero")]
    NoGain,

    #[error("geometry search grid is empty")]
    EmptySearchGrid,

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
