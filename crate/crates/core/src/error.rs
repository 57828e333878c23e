use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    /// A fatal problem with the instance content, naming the first offending entity.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("stop graph is disconnected: {0} cannot reach {1}")]
    Disconnected(String, String),

    #[error("zones {0} and {1} have positive demand but no path between their nearest stops")]
    UnreachablePair(String, String),

    #[error("unknown stop id {0:?}")]
    UnknownStop(String),

    #[error("zone {0} has an empty candidate stop set")]
    EmptyCandidates(String),

    #[error("instance too large for exhaustive search: {0} stops (limit {1})")]
    TooLarge(usize, usize),

    #[error("variable {name} has non-integral value {value}")]
    NonIntegral { name: String, value: f64 },

    /// The decoded selection disagrees with the model; this is a modelling bug.
    #[error("inconsistency between model and evaluation: {0}")]
    Consistency(String),

    #[error("missing coordinates for {0}")]
    MissingCoordinates(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
