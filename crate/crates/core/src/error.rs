use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the codec, channel, simulator and configuration layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The first received symbol is too close to zero to undo power control.
    #[error("degenerate normalizer: |y_1| = {0:e} is below threshold")]
    DegenerateNormalizer(f64),

    #[error("config file not found: {}", path.display())]
    ConfigMissing { path: PathBuf },

    #[error("failed to parse config {}: {message}", path.display())]
    ConfigParse { path: PathBuf, message: String },

    /// A config value violates an invariant; `keys` names the offending keys.
    #[error("invalid config value for `{}`: {message}", keys.join("`, `"))]
    ConfigInvariant { keys: Vec<String>, message: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
