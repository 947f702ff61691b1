use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("game must have at least one player")]
    NoPlayers,

    #[error("expected {expected} action counts (one per player), found {found}")]
    ActionCountsLength { expected: usize, found: usize },

    #[error("player {player} has zero actions")]
    EmptyActionSet { player: usize },

    #[error("expected {expected} utility tensors (one per player), found {found}")]
    TensorCount { expected: usize, found: usize },

    #[error("utility tensor of player {player} has length {found}, expected {expected}")]
    TensorLength {
        player: usize,
        expected: usize,
        found: usize,
    },

    #[error("utility tensor of player {player} holds a non-finite value at index {index}")]
    NonFinite { player: usize, index: usize },

    #[error("profile has {found} coordinates, expected {expected}")]
    ProfileLength { expected: usize, found: usize },

    #[error("action {action} of player {player} is out of range (player has {count} actions)")]
    ActionOutOfRange {
        player: usize,
        action: usize,
        count: usize,
    },

    #[error("flat index {index} is out of range for {size} profiles")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("games have different shapes: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("policy of player {player} is not a probability vector: {reason}")]
    InvalidPolicy { player: usize, reason: String },

    #[error("numerical failure at step {step}: probability mass of player {player} collapsed to {sum}")]
    NumericalFailure { step: usize, player: usize, sum: f64 },

    #[error("condensation contains a cycle; {remaining} components could not be ordered")]
    CyclicCondensation { remaining: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot aggregate an empty set of results")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
