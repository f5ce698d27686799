use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error("gap in monthly series for {entity}: missing {month}")]
    Gap { entity: String, month: String },

    #[error("duplicate observation for {entity} at {key}")]
    Duplicate { entity: String, key: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("weight error: {0}")]
    Weight(String),

    #[error("coverage error for {country} in {year}: missing {field}")]
    Coverage {
        country: String,
        year: i32,
        field: String,
    },

    #[error("membership error: {0}")]
    Membership(String),

    #[error("constant column `{0}` cannot be standardized")]
    ConstantColumn(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model spec error: {0}")]
    ModelSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
