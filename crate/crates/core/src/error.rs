use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters outside the supported range (e.g. `mu < lambda`).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Caller-supplied input that violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// The influence cone of a truncated window reached a certified site.
    #[error("window breach at t = {time}: boundary influence reached site {site} (window {lo:?}..={hi:?})")]
    WindowBreach {
        time: f64,
        site: i64,
        lo: Option<i64>,
        hi: Option<i64>,
    },

    /// A pathwise identity that must hold by construction failed.
    #[error("engine violation: {0}")]
    Engine(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
