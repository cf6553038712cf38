use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its physical or mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty spectrum: filter passbands do not overlap under energy conservation")]
    EmptySpectrum,

    #[error("no peak: histogram contains no counts")]
    NoPeak,

    #[error("no signal: all fringe counts are zero")]
    NoSignal,

    #[error("no coincidences: total count is zero")]
    NoCoincidences,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("fit failed after {iterations} iterations (chi2 = {chi2:.6e}, last step = {last_step:.3e})")]
    FitFailed {
        iterations: usize,
        chi2: f64,
        last_step: f64,
    },

    #[error("ruler too short: best-fit delay exceeds the ruler range of {max_delay_ps} ps")]
    RulerTooShort { max_delay_ps: f64 },

    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
