use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate metric at q = {0:?}")]
    DegenerateMetric(Vec<f64>),

    #[error("no classical trajectory: shooting stalled with residual {residual:.3e} after {iterations} iterations")]
    NoTrajectory { residual: f64, iterations: usize },

    #[error("step size too coarse: {0}")]
    StepSize(String),

    #[error("parallel frame drifted by {drift:.3e} (tolerance {tolerance:.1e})")]
    FrameIntegration { drift: f64, tolerance: f64 },

    #[error("point outside the chart: {0}")]
    OutOfChart(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("energy {energy} within the pole guard of the resolvent window")]
    NearPole { energy: f64 },

    #[error("contour does not close: endpoint gap {0:.3e}")]
    Contour(f64),

    #[error("radius {r} is on or beyond the tube boundary {radius}")]
    Boundary { r: f64, radius: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty ensemble")]
    NoData,

    #[error("partition error: {0}")]
    Partition(String),

    #[error("|A| = {value:.6e} exceeds the declared bound C·T = {bound:.6e}")]
    BoundViolation { value: f64, bound: f64 },

    #[error("observable value {value:.6e} exceeds its declared bound {bound:.6e}")]
    MisdeclaredBound { value: f64, bound: f64 },

    #[error("time weights sum to {0}, expected 1")]
    Weights(f64),

    #[error("argument out of range: {0}")]
    Range(String),

    #[error("instance too large: {0}")]
    Size(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
