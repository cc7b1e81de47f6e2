use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point lies on the camera plane (depth {depth:e}); projection undefined")]
    PointAtCameraPlane { depth: f64 },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("no consensus: best hypothesis had {best_inliers} inliers, need {needed}")]
    NoConsensus { best_inliers: usize, needed: usize },

    #[error("cannot linearize: correspondence {index} has non-positive depth")]
    InvalidLinearization { index: usize },

    #[error("invalid initialization: correspondence {index} has non-positive depth")]
    InvalidInitialization { index: usize },

    #[error("metric over an empty correspondence set")]
    EmptySet,

    #[error("scene produced no visible camera detections")]
    EmptyScene,

    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("validation error at line {line}: {message}")]
    Validation { line: u64, message: String },

    #[error("corrupt calibration artifact: {0}")]
    CorruptArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
