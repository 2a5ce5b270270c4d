use thiserror::Error;

/// Errors produced by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum CpsError {
    /// Map dimensions or buffer lengths do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A surface point coincides with a light or the geometry is otherwise unusable.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// A precondition on the inputs does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Self-calibration could not produce a position for a light.
    #[error("calibration failed for light {light}: {reason}")]
    CalibrationFailed { light: usize, reason: String },
    /// The linear system of a masked component could not be solved.
    #[error("singular system in mask component {component}")]
    SingularSystem { component: usize },
    /// A pixel violates a stated precondition (reported with its coordinates).
    #[error("precondition violated at pixel ({x}, {y}): {reason}")]
    BadPixel { x: usize, y: usize, reason: String },
    /// A pipeline stage failed; the inner error keeps the diagnostics.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CpsError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// Malformed portable float map header or payload.
    #[error("pfm format error: {0}")]
    Pfm(String),
}

pub type Result<T> = std::result::Result<T, CpsError>;
