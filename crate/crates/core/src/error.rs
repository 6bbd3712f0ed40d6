use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A quantity or parameter is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver or integrator was configured with an unusable step/limit.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input table or file could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// An estimator could not produce a result from the given data.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A fit failed to converge or the normal equations were singular.
    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
