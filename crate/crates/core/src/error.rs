use thiserror::Error;

use crate::qkd::ProtocolTranscript;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot compose: target {target} does not match source {domain}")]
    Mismatch { target: String, domain: String },

    #[error("category tags differ: {left} vs {right}")]
    TagMismatch {
        left: &'static str,
        right: &'static str,
    },

    #[error("invalid morphism: {0}")]
    InvalidShape(String),

    #[error("ill-typed compact structure: {0}")]
    IllTyped(String),

    #[error("morphism is not in the M class of the factorisation system")]
    NotInM,

    #[error("outer square does not commute (deviation {0})")]
    SquareDoesNotCommute(f64),

    #[error("chain not stabilised within {0} steps")]
    NotStabilised(usize),

    #[error("no factorisation through the colimit found up to depth {0}")]
    NoFactorisation(usize),

    #[error("cone legs are incompatible with the limit cone (residual {0})")]
    IncompatibleLegs(f64),

    #[error("classical structures need dimension at least 1")]
    ZeroDimensionalClassical,

    #[error("not a projector-valued spectrum: p p^dagger deviates from identity by {0}")]
    NotPvm(f64),

    #[error("state is not normalised (norm {0})")]
    NotNormalised(f64),

    #[error("measurement outcome probabilities sum to {0}, expected 1")]
    IncompleteMeasurement(f64),

    #[error("quantum channel exhausted at truncation depth 0")]
    ChannelExhausted,

    #[error("protocol did not terminate within {rounds} rounds")]
    NonTermination {
        rounds: usize,
        transcript: Box<ProtocolTranscript>,
    },

    #[error("too few samples for a CHSH estimate: {0} < 1000")]
    TooFewSamples(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
