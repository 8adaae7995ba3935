use thiserror::Error;

use crate::grid::Cell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("position ({x}, {y}) lies outside the {side} m map")]
    OutOfBounds { x: f64, y: f64, side: f64 },

    #[error("{0}")]
    Domain(String),

    /// The agent has no legal move from its current cell.
    #[error("agent is boxed in at cell {0}")]
    BoxedIn(Cell),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
