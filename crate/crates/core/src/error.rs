use thiserror::Error;

use crate::game::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The input is outside the operation's domain (wrong player count,
    /// not zero-sum, Δ = 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("player index {player} out of range for a {players}-player game")]
    PlayerOutOfRange { player: usize, players: usize },

    /// Fixed-point iteration did not settle; usually γ = 1 on an improper game.
    #[error("value iteration diverged or did not converge after {iterations} iterations")]
    Divergence { iterations: usize },

    #[error("search space of {size} profiles exceeds the limit of {limit}")]
    SearchTooLarge { size: f64, limit: f64 },

    #[error("operation cancelled")]
    Cancelled,

    #[error("invalid game:\n{0}")]
    InvalidGame(ValidationReport),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
