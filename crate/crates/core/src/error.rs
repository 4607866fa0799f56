use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not symmetric positive definite at ({x}, {y})")]
    MetricDegenerate { x: f64, y: f64 },

    #[error("mesh integrity: {0}")]
    MeshIntegrity(String),

    #[error("degenerate triangle {index} (area {area:.3e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("field has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    Diverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("ill-conditioned N -> Lambda inversion at boundary vertex {vertex}: |N| = {value}")]
    IllConditionedInversion { vertex: usize, value: f64 },

    #[error("invalid conformal factor: c = {value} at ({x}, {y})")]
    InvalidConformalFactor { value: f64, x: f64, y: f64 },

    #[error("under-resolved oscillation: mesh size {actual:.3e}, need at most {required:.3e}")]
    Resolution { required: f64, actual: f64 },

    #[error("unreliable recovery: {0}")]
    UnreliableRecovery(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
