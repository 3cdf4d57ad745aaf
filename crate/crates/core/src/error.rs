use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate skeleton: {0}")]
    DegenerateSkeleton(String),
    #[error("arc-length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("no ray hit the model")]
    EmptyView,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("empty skeleton")]
    EmptySkeleton,
    #[error("too few points: need more than {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("too sparse: {0}")]
    TooSparse(String),
    #[error("optimization diverged at step {step}")]
    Divergence { step: usize },
    #[error("refined point {index} is {distance} m from the skeleton (bound {bound} m)")]
    OutOfBounds {
        index: usize,
        distance: f64,
        bound: f64,
    },
    #[error("length mismatch: {0} estimates vs {1} ground-truth values")]
    LengthMismatch(usize, usize),
    #[error("ground-truth value at index {0} is zero")]
    ZeroGroundTruth(usize),
    #[error("duplicate branch id {0}")]
    DuplicateBranchId(u32),
    #[error("unknown branch id {0}")]
    UnknownBranchId(u32),
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 3 for numerical failures, 2 for everything caused by input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::OutOfBounds { .. } => 3,
            _ => 2,
        }
    }
}
