use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown controller `{0}` (expected tree-full, tree-<N>, single or oracle)")]
    UnknownController(String),

    #[error(transparent)]
    Planner(#[from] control_tree::Error),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the error came from the planner rather than from the input.
    pub fn is_solve_failure(&self) -> bool {
        matches!(
            self,
            SimError::Planner(control_tree::Error::NonFinite { .. } | control_tree::Error::TooManyHypotheses { .. })
        )
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
