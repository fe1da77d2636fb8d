use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
