use thiserror::Error;

use crate::training::TrainTrajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("perturbation kernel is singular at t = {t} (t_min = {t_min})")]
    Singularity { t: f64, t_min: f64 },

    #[error("numerical blow-up at t = {t}: {detail}")]
    Blowup { t: f64, detail: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("operation not supported for {0} models")]
    UnsupportedModel(&'static str),

    #[error("grid misses {deficit:e} of the probability mass")]
    GridCoverage { deficit: f64 },

    #[error("density has zero total mass")]
    DegenerateDensity,

    #[error(
        "support mismatch: {mass:e} of the reference mass sits where the model density is zero"
    )]
    Support { mass: f64 },

    #[error("training diverged at epoch {epoch}")]
    Divergence {
        epoch: usize,
        trajectory: Box<TrainTrajectory>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::MissingColumn(_) => 2,
            Error::Divergence { .. } | Error::Blowup { .. } | Error::NonFinite(_) => 3,
            _ => 1,
        }
    }
}
