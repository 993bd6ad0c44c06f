use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no deflator configured for year {0}")]
    MissingDeflator(i32),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate distances: every k-distance is zero")]
    DegenerateDistances,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hs code {0} matches both scrap and finished label prefixes")]
    LabelConflict(String),

    #[error(
        "logistic fit did not converge after {iterations} iterations (gradient max-norm {grad_norm:e}); \
         the classes are likely separable, use l2_lambda > 0"
    )]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("hs code {0} was not modeled")]
    NotModeled(String),

    #[error("nothing to report")]
    NothingToReport,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}
