use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box on axis {axis}: lo = {lo} must be < hi = {hi}")]
    DegenerateBox { axis: usize, lo: f64, hi: f64 },

    #[error("resolution on axis {axis} is {resolution}, need at least 2")]
    Resolution { axis: usize, resolution: usize },

    #[error("unsupported dimension: {0}")]
    Dimension(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value {value} at node {node} (coordinates {coords:?})")]
    NonFinite { node: usize, coords: Vec<f64>, value: f64 },

    #[error("invalid polytope: {0}")]
    Polytope(String),

    #[error("dual resolution {0} is below 2")]
    DualResolution(usize),

    #[error("singularity type exceeds class: {0}")]
    SingularityExceedsClass(String),

    #[error("non-convex input along {line} at node {node}: second difference {second_difference:e}")]
    NonConvex { line: String, node: usize, second_difference: f64 },

    #[error("truncated measures decreased at node {node} between steps {step} and {next}: drop {drop:e}")]
    Monotonicity { node: usize, step: usize, next: usize, drop: f64 },

    #[error("potential exceeds barrier at node {node} by {excess:e}")]
    AboveBarrier { node: usize, excess: f64 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Scenario(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
