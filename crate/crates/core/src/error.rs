use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument must be finite, got {0}")]
    NonFinite(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time step {dt} s exceeds the limit {limit} s (1/(100 f_max), f_max = {f_max} Hz)")]
    StepTooLarge { dt: f64, limit: f64, f_max: f64 },

    #[error("state became non-finite at step {step} (t = {time} s)")]
    NonFiniteState { step: usize, time: f64 },

    #[error("time series has no channel named `{0}`")]
    MissingChannel(String),

    #[error("channel `{name}` has {got} samples, expected {expected}")]
    ChannelLength { name: String, got: usize, expected: usize },

    #[error("samples are not uniformly spaced (sample {index})")]
    NonUniformSampling { index: usize },

    #[error("analysis window spans {periods:.3} periods of {frequency} Hz, need at least {min}")]
    WindowTooShort { frequency: f64, periods: f64, min: f64 },

    #[error("analysis window spans {periods:.4} periods of {frequency} Hz, not an integer count")]
    NonIntegerWindow { frequency: f64, periods: f64 },

    #[error("peak search tolerance {tol} Hz is below the bin width {df} Hz")]
    ToleranceBelowBinWidth { tol: f64, df: f64 },

    #[error("peak windows overlap: line spacing {spacing} Hz < 2 x tolerance {tol} Hz")]
    OverlappingWindows { spacing: f64, tol: f64 },

    #[error("reference tone amplitude {amplitude} is below the threshold {threshold}")]
    ReferenceBelowThreshold { amplitude: f64, threshold: f64 },

    #[error("fit is ill-posed: {0}")]
    BadFitInput(String),

    #[error("Jacobian is rank deficient (parameter {0} has no influence on the residuals)")]
    RankDeficient(String),

    #[error("binary record: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
