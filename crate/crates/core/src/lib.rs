//! Reinforcement-learned bitrate ladders.
//!
//! The crate is organised around the pipeline it implements:
//!
//! - [`domain`]: configuration spaces, features, outcomes, ladders and their
//!   constraint checks.
//! - [`environment`]: the encoding environment, either replayed measurement
//!   logs or a parametric rate/quality/decoding-time surrogate.
//! - [`predictors`]: bagged regression-tree ensembles standing in for the
//!   encoder at inference time.
//! - [`qnet`]: the Q-network, replay memory, exploration schedule and training
//!   loop.
//! - [`ladder`]: reward shaping, agent inference and the baseline ladder
//!   constructors.
//! - [`bd`]: Bjøntegaard-delta metrics and ladder comparison reports.
//! - [`experiment`]: end-to-end orchestration used by the CLI and the
//!   acceptance suite.

pub mod bd;
pub mod domain;
pub mod environment;
pub mod experiment;
pub mod io;
pub mod ladder;
pub mod predictors;
pub mod qnet;
pub mod rng;

pub use domain::{
    Action, AgentState, ConfigSpace, EncodingOutcome, Ladder, LadderRung, QualityMetric, RewardWeights, RungFlags,
    SegmentFeatures,
};

use std::path::PathBuf;

/// Broad error category, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Invariant(_) => ErrorKind::Internal,
            Error::Data(_) | Error::UnknownSegment(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => {
                ErrorKind::Data
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
