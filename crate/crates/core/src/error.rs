use thiserror::Error;

pub type Result<T> = std::result::Result<T, OtError>;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("space must contain at least one point")]
    EmptySpace,
    #[error("distance matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("distance matrix is not symmetric at ({i}, {j}): {dij} vs {dji}")]
    NotSymmetric { i: usize, j: usize, dij: f64, dji: f64 },
    #[error("negative or non-finite distance {value} at ({i}, {j})")]
    InvalidDistance { i: usize, j: usize, value: f64 },
    #[error("distinct points {i} and {j} are at distance zero")]
    ZeroDistance { i: usize, j: usize },
    #[error("nonzero self-distance {value} at point {i}")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("coordinate dimension mismatch: point {point} has {got} coordinates, expected {expected}")]
    CoordinateDimension { point: usize, got: usize, expected: usize },
    #[error("point index {index} out of range for a space of {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown point id {0:?}")]
    UnknownId(String),
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("exponent p must be positive and finite, got {0}")]
    InvalidExponent(f64),
    #[error("grid side length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cdf decreases between {x0} (F = {f0}) and {x1} (F = {f1})")]
    DecreasingCdf { x0: f64, f0: f64, x1: f64, f1: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("signed vector is unbalanced: total {total} exceeds tolerance")]
    Unbalanced { total: f64 },
    #[error("flow problem infeasible: {0}")]
    Infeasible(String),
    #[error("solver did not certify optimality (duality gap {gap})")]
    NonConvergence { gap: f64 },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("method {method} cannot be used with structure {structure}")]
    MethodMismatch { method: &'static str, structure: &'static str },
    #[error("measures coincide: W_p(r, s) = 0, the alternative-case limit is undefined")]
    IdenticalMeasures,
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidQuantile(f64),
    #[error("at least {min} draws required, got {got}")]
    TooFewDraws { min: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl OtError {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            OtError::EmptySpace => "empty_space",
            OtError::NotSquare { .. } => "not_square",
            OtError::NotSymmetric { .. } => "not_symmetric",
            OtError::InvalidDistance { .. } => "invalid_distance",
            OtError::ZeroDistance { .. } => "zero_distance",
            OtError::NonzeroDiagonal { .. } => "nonzero_diagonal",
            OtError::CoordinateDimension { .. } => "coordinate_dimension",
            OtError::IndexOutOfRange { .. } => "index_out_of_range",
            OtError::UnknownId(_) => "unknown_id",
            OtError::InvalidThreshold(_) => "invalid_threshold",
            OtError::InvalidExponent(_) => "invalid_exponent",
            OtError::NotPowerOfTwo(_) => "not_power_of_two",
            OtError::InvalidGrid(_) => "invalid_grid",
            OtError::DecreasingCdf { .. } => "decreasing_cdf",
            OtError::InvalidMeasure(_) => "invalid_measure",
            OtError::DimensionMismatch { .. } => "dimension_mismatch",
            OtError::EmptySample => "empty_sample",
            OtError::Unbalanced { .. } => "unbalanced",
            OtError::Infeasible(_) => "infeasible",
            OtError::NonConvergence { .. } => "non_convergence",
            OtError::InvalidTree(_) => "invalid_tree",
            OtError::MethodMismatch { .. } => "method_mismatch",
            OtError::IdenticalMeasures => "identical_measures",
            OtError::InvalidQuantile(_) => "invalid_quantile",
            OtError::TooFewDraws { .. } => "too_few_draws",
            OtError::InvalidArgument(_) => "invalid_argument",
            OtError::Parse(_) => "parse",
            OtError::Io(_) => "io",
            OtError::Csv(_) => "csv",
            OtError::Json(_) => "json",
            OtError::Image(_) => "image",
        }
    }
}
