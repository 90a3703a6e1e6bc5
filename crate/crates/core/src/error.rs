use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}:{line}: malformed row: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: time out of range: t={t}, horizon={horizon}")]
    TimeOutOfRange {
        path: String,
        line: usize,
        t: f64,
        horizon: f64,
    },

    #[error("{path}:{line}: event ({x}, {y}) outside spatial window")]
    OutsideWindow {
        path: String,
        line: usize,
        x: f64,
        y: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}
