use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank {rank} is outside 1..={rank_count}")]
    RankOutOfRange { rank: usize, rank_count: usize },

    #[error("at least two ranks are required, got {0}")]
    TooFewRanks(usize),

    #[error("example {index}: the last feature must be exactly -1, found {found}")]
    MissingBias { index: usize, found: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("the feasible output set is empty")]
    NoFeasibleOutput,

    #[error("the feature difference has zero norm")]
    ZeroFeatureDifference,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("weights must have unit norm, found {0}")]
    NotNormalized(f64),

    #[error("thresholds are not sorted in non-decreasing order")]
    UnsortedThresholds,

    #[error("rejection budget of {budget} draws exhausted with {accepted} examples accepted")]
    RejectionBudget { budget: usize, accepted: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate targets: {0}")]
    DegenerateTargets(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
