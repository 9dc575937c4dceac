use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("log mass must not be NaN")]
    InvalidMass,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("token id {token} out of range for vocabulary of size {size}")]
    InvalidToken { token: usize, size: usize },

    #[error("sequence is not finished with the sentence-end token")]
    UnfinishedSequence,

    #[error("input features must have at least one frame")]
    EmptyFeatures,

    #[error("input features must be finite and rectangular")]
    MalformedFeatures,

    #[error("feature dimension mismatch: model expects {expected}, input has {actual}")]
    FeatureDim { expected: usize, actual: usize },

    #[error("scorer state advanced past the length cap of {cap} steps")]
    LengthCap { cap: usize },

    #[error("vocabulary size mismatch: {0} vs {1}")]
    VocabMismatch(usize, usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("lattice contains a cycle")]
    Cycle,

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("lattice has {count} paths, more than the enumeration limit {limit}")]
    EnumerationLimit { count: String, limit: usize },

    #[error("enumeration budget exceeded: {needed} sequences needed, guard is {guard}")]
    BudgetExceeded { needed: u128, guard: u128 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged: mean criterion decreased for {patience} consecutive epochs (epoch {epoch})")]
    Diverged { epoch: usize, patience: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
