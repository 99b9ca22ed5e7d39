use thiserror::Error;

/// Errors produced by ingestion, canonical-set extraction, and the analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("duplicate run ({model}, {task}, run {run_index}) on lines {first_line} and {second_line}")]
    DuplicateRun {
        model: String,
        task: String,
        run_index: u32,
        first_line: usize,
        second_line: usize,
    },

    #[error("unit ({model}, {task}) has {found} runs, expected {expected}")]
    WrongRunCount {
        model: String,
        task: String,
        found: usize,
        expected: usize,
    },

    #[error("line {line}: run has no tool calls")]
    EmptyRun { line: usize },

    #[error("model {0:?} is missing from the family map")]
    UnknownFamily(String),

    #[error("runs passed to a single unit span more than one (model, task) key")]
    MixedUnitKeys,

    #[error("task {task:?}: {found} successful runs after exclusions, need at least {required}")]
    InsufficientSupport {
        task: String,
        found: usize,
        required: usize,
    },

    #[error("empty comparison: both tool sets are empty")]
    EmptyComparison,

    #[error("run too short: {calls} calls, need at least {required}")]
    RunTooShort { calls: usize, required: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("too few clusters: {found} (need at least {required})")]
    TooFewClusters { found: usize, required: usize },

    #[error("perfect separation: {0}")]
    PerfectSeparation(String),

    #[error("logistic fit did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("coefficient unidentified: no within-trajectory variance in the regressor")]
    NoWithinVariance,

    #[error("no eligible observations: {0}")]
    NoEligible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("monitor session is closed")]
    SessionClosed,

    #[error("checkpoint not reached: {observed} of {required} calls observed")]
    CheckpointNotReached { observed: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
