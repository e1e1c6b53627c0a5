use thiserror::Error;

pub type Result<T, E = PlannerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("point ({x:.4}, {y:.4}, {z:.4}) lies outside the valid map region")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("invalid grid geometry: {0}")]
    InvalidGrid(String),

    #[error("expected {expected} inputs, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("derivative level {level} is not a state of an order-{order} model")]
    DerivativeLevel { level: usize, order: usize },

    #[error("unsupported integrator order {0} (expected 1 or 3)")]
    UnsupportedOrder(usize),

    #[error("no collision-free path between start and goal")]
    Unreachable,

    #[error("{which} lies inside an inflated obstacle")]
    InvalidEndpoint { which: &'static str },

    #[error("non-finite value in cost term `{term}` at step {step}")]
    NonFiniteCost { term: &'static str, step: usize },

    #[error("objective is not finite at the initial point")]
    NonFiniteStart,

    #[error("map generation failed: start and goal disconnected after {retries} retries")]
    MapGeneration { retries: usize },

    #[error("map file line {line}: {message}")]
    MapFormat { line: usize, message: String },

    #[error("unknown map generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
