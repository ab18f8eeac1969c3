use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid walk distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("itinerary enumeration needs {required} components, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("grid of {points} points per axis aliases a pairing of bandwidth {bandwidth}")]
    Aliasing { points: usize, bandwidth: u64 },

    #[error("observable has no analytic infinite-volume average: {0}")]
    NotAnalytic(String),

    #[error("time {n} is smaller than the depth offset {offset}")]
    InvalidOffset { n: u64, offset: u64 },

    #[error("series too short or degenerate: {0}")]
    DegenerateSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
