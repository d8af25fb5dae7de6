use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: negative weight {weight}")]
    NegativeWeight { line: usize, weight: f64 },

    #[error("no events to slice")]
    NoSlices,

    #[error("timestamp {time} precedes slicing origin {origin}")]
    BeforeOrigin { time: f64, origin: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dense tensor needs {required} bytes, budget is {budget}")]
    TensorTooLarge { required: u128, budget: u128 },

    #[error("rank k = {k} exceeds node count N = {n}")]
    RankExceedsNodes { k: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {stage} at iteration {iteration}")]
    NonFinite {
        stage: &'static str,
        iteration: usize,
    },

    #[error("slice {slice}: present node {node} has an all-zero indicator row")]
    DegenerateRow { slice: usize, node: usize },

    #[error("partitions share no nodes")]
    EmptyComparison,

    #[error("slice {slice}: {source}")]
    Slice {
        slice: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by
    /// the data or the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::RankExceedsNodes { .. } | Error::TensorTooLarge { .. } => {
                true
            }
            Error::Stage { source, .. } | Error::Slice { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
