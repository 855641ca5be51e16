use thiserror::Error;

/// Errors raised by the plant, the perception chain, the agents and the
/// episodic harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("step called after the episode finished; reset the environment first")]
    EpisodeFinished,
    #[error("step called before the environment was reset")]
    NotReset,
    #[error("position {x} px is outside the track [-{half_width}, {half_width}]")]
    OutOfTrack { x: f64, half_width: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("covariance is not symmetric positive definite after {0}")]
    CovarianceCollapse(&'static str),
    #[error("feature index {index} out of range (feature count {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("illegal lifecycle transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("cannot write output {path}: {source}")]
    OutputUnwritable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
