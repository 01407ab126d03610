use crate::camera::ViewId;
use thiserror::Error;

/// Errors from geometry, image, and rasterization primitives.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("quaternion norm {norm} deviates from unit by more than {tol}")]
    NonUnitQuaternion { norm: f64, tol: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },
    #[error("invalid {what}: {why}")]
    Invalid { what: String, why: String },
}

impl CoreError {
    pub fn dims(context: &str, expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        CoreError::DimensionMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn invalid(what: &str, why: impl std::fmt::Display) -> Self {
        CoreError::Invalid {
            what: what.to_string(),
            why: why.to_string(),
        }
    }
}

/// Errors from PLY point-cloud I/O.
#[derive(Debug, Error)]
pub enum PlyError {
    #[error("ply i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("ply parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported ply feature: {0}")]
    Unsupported(String),
}

/// Errors from the view sampling schedule.
#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no views to schedule")]
    NoViews,
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("schedule starved: {refills} consecutive stack refills produced no kept sample")]
    Starved { refills: u32 },
}

/// Errors from fixer implementations and the denoise combinator.
#[derive(Debug, Error)]
pub enum FixError {
    #[error("fix failed for view {view_id}: {message}")]
    Failed { view_id: ViewId, message: String },
    #[error("latent length mismatch: Z has {z_big}, z has {z}, noise has {noise}")]
    LatentLength { z_big: usize, z: usize, noise: usize },
    #[error("invalid denoise coefficients: {0}")]
    BadCoeffs(String),
    #[error("no reference views to select from")]
    NoReferences,
    #[error("external fixer process error: {0}")]
    Process(String),
    #[error("external fixer timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Errors from checkpoint serialization.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },
    #[error("unsupported checkpoint version {got} (this build reads version {supported})")]
    UnsupportedVersion { got: u32, supported: u32 },
    #[error("truncated checkpoint: expected {expected} bytes of payload, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("checkpoint sidecar error: {0}")]
    Sidecar(String),
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no reference views with targets")]
    NoReferenceViews,
    #[error("view {0} has no target image")]
    MissingTarget(ViewId),
    #[error("view {0} drawn by the schedule is unknown")]
    UnknownView(ViewId),
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Core(#[from] CoreError),
}
