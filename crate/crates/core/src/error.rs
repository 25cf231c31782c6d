use thiserror::Error;

/// Errors surfaced by scene generation, planning, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejection sampling could not place all objects without overlap.
    #[error("scene generation failed for seed {seed}: no non-overlapping placement for object {object} after {attempts} attempts")]
    ScenePlacement {
        seed: u64,
        object: usize,
        attempts: usize,
    },

    /// No object is visible from the requested view, so no target can be chosen.
    #[error("no object visible from the initial view; scene rejected")]
    NoVisibleObject,

    /// Every generated view candidate failed the reachability check.
    #[error("all {candidates} view candidates are unreachable")]
    NoReachableViews { candidates: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
