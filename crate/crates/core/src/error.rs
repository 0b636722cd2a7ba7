use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid patient record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("cohort too small to split: {0} patients (need at least 10)")]
    CohortTooSmall(usize),

    #[error("accelerometer native rate {0} Hz is below the 10 Hz target; upsampling is unsupported")]
    UpsamplingUnsupported(f64),

    #[error("cannot fit normalizer on an empty training set")]
    EmptyTrainingSet,

    #[error("block shape mismatch for {modality}: expected {expected} values, got {got}")]
    Shape {
        modality: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite input in {0} block")]
    NonFiniteInput(&'static str),

    #[error("validation split has no positives for critical heads: {0}")]
    NoCriticalPositives(String),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("metric undefined on {failed} of {attempts} bootstrap draws")]
    BootstrapDegenerate { failed: usize, attempts: usize },

    #[error("invalid count: k={k} exceeds n={n}")]
    CountExceedsTotal { k: u64, n: u64 },

    #[error("invalid statistics input: {0}")]
    StatsInput(String),

    #[error("modality {0} is absent in this window")]
    AbsentModality(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
