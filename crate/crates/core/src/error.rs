use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("tap delay {delay_s:e} s falls outside the {cells}-cell grid of spacing {delta_tau_s:e} s")]
    DelayOutOfRange {
        delay_s: f64,
        delta_tau_s: f64,
        cells: usize,
    },

    #[error("delay derivative is singular: {0}")]
    Singular(String),

    #[error("Fisher information is rank deficient along {direction}")]
    RankDeficient { direction: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
