use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Layer numbers in messages are 1-based (matching the usual `W_1 .. W_L`
/// naming); neuron and entry indices are 0-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch in layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        got: String,
    },

    #[error("non-finite entry at {0}")]
    NonFiniteEntry(String),

    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),

    #[error("operation requires a single channel, got {0}")]
    UnsupportedChannels(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("flat vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid permutation for hidden layer {layer}: {reason}")]
    InvalidPermutation { layer: usize, reason: String },

    #[error("tied biases in layer {layer}: neurons {i} and {j}")]
    TiedBiases { layer: usize, i: usize, j: usize },

    #[error("graph variant mismatch")]
    VariantMismatch,

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("attention over an empty key/value set")]
    EmptyKv,

    #[error("brute-force budget exceeded: group order {order} > {budget}")]
    BudgetExceeded { order: u128, budget: u128 },

    #[error("scaling factor must be positive and different from 1, got {0}")]
    BadLambda(f64),

    #[error("empty set")]
    EmptySet,

    #[error("unsupported architecture: {0}")]
    UnsupportedArch(String),

    #[error("interval mismatch: [{a0}, {a1}] vs [{b0}, {b1}]")]
    IntervalMismatch { a0: f64, a1: f64, b0: f64, b1: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
