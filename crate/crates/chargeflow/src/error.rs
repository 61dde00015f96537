use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid group data: {0}")]
    InvalidGroup(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("ill-conditioned quotient: {0}")]
    Conditioning(String),
    #[error("precision not reached: estimate {estimate} +- {std_error} after {samples} samples")]
    PrecisionNotReached {
        estimate: f64,
        std_error: f64,
        samples: u64,
    },
    #[error("incomplete spectral window at m = {m}: {detail}")]
    IncompleteWindow { m: u32, detail: String },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("positivity threshold not found: {0}")]
    ThresholdNotFound(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
