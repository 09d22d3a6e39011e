use thiserror::Error;

/// Errors surfaced by any toolkit module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset generation failed after {attempts} attempts; last minority class fraction {last_fraction:.4}")]
    GenerationFailed { attempts: u32, last_fraction: f64 },

    #[error("csv parse error at row {row}, column {column}: {message}")]
    CsvParse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("numeric overflow: non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("metric {metric} undefined for group {group}: zero denominator")]
    UndefinedMetric { metric: &'static str, group: u8 },

    #[error("correlation penalty undefined: no rows with y = {q}")]
    UndefinedPenalty { q: u8 },

    #[error("sweep axis {axis} is not supported for CSV data sources")]
    UnsupportedAxis { axis: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
