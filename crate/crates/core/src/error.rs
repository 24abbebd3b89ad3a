use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid jump model: {0}")]
    InvalidModel(String),

    #[error("invalid weight sequence: {0}")]
    InvalidWeights(String),

    #[error("operation requires a lattice model")]
    NotLattice,

    #[error("window [{lo}, {hi}] does not cover targets [{x_lo}, {x_hi}] with margin {margin}")]
    WindowMisconfigured {
        lo: i64,
        hi: i64,
        x_lo: i64,
        x_hi: i64,
        margin: i64,
    },

    #[error("window length {delta} is not a positive multiple of the span {span}")]
    DeltaNotMultipleOfSpan { delta: f64, span: f64 },

    #[error("averaged weight is nonpositive at n={n}: {value}")]
    NonpositiveAverage { n: usize, value: f64 },

    #[error("q={q} is outside the admissible interval ({lo}, {hi})")]
    QOutOfRange { q: f64, lo: f64, hi: f64 },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("moment generating function unavailable: {0}")]
    MgfUnavailable(String),

    #[error("missing tail metadata: {0}")]
    MissingTailMetadata(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario '{id}': {source}")]
    Scenario {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
