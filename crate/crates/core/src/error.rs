use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "{count} deterministic policies exceed the enumeration cap of {cap}; \
         supply H, B and D explicitly"
    )]
    Scope { count: f64, cap: u64 },

    #[error("planner failed at iteration {iteration}: {source}")]
    Planner {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
