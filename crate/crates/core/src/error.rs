use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::RegionLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("layout does not fit the mesh: {0}")]
    LayoutOverflow(String),

    #[error("no material assigned to region {0:?}")]
    MissingMaterial(RegionLabel),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("demag kernel built for a different mesh ({0})")]
    KernelMismatch(String),

    #[error("padded demag grid of {cells} cells exceeds the allowed {limit}")]
    DemagTooLarge { cells: usize, limit: usize },

    #[error("step size underflow at t = {t:.6e} s (dt = {dt:.3e} s)")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("relaxation did not converge within {steps} steps (torque {torque:.3e})")]
    RelaxationFailed { steps: usize, torque: f64 },

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("no output sample at t = {0:.6e} s")]
    MissingSample(f64),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },

    #[error("OVF parse error: {0}")]
    Ovf(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("scenario `{scenario}` aborted: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
