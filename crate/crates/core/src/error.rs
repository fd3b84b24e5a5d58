use thiserror::Error;

/// Errors raised while building or validating the finite objects of the workbench.
///
/// Every variant that corresponds to a violated hypothesis names the quantity that
/// failed, so the CLI can surface it verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("metric axiom violated: {0}")]
    MetricAxiom(String),
    #[error("graph is disconnected: point {0:?} unreachable from {1:?}")]
    Disconnected(String, String),
    #[error("unknown point id {0:?}")]
    UnknownPoint(String),
    #[error("point index {0} out of range for a space of {1} points")]
    PointIndex(usize, usize),
    #[error("empty point set: {0}")]
    EmptySet(String),
    #[error("invalid cover: {0}")]
    InvalidCover(String),
    #[error("cover has no coloring")]
    MissingColoring,
    #[error("invalid partition of unity: {0}")]
    InvalidPartition(String),
    #[error("invalid witness: {0}")]
    InvalidWitness(String),
    #[error("not an isometry: d({0}, {1}) = {2} but image distance is {3}")]
    NotIsometry(String, String, f64, f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("asymptotic-dimension search exhausted its budget after {attempts} attempts (inconclusive)")]
    SearchBudget { attempts: usize },
    #[error("piece {piece} witness is missing point {point:?}")]
    MissingPiecePoint { piece: usize, point: String },
    #[error("ceiling exceeded: {name} = {value} > {ceiling} (witness {witness})")]
    CeilingExceeded { name: String, value: f64, ceiling: f64, witness: String },
    #[error("invalid group model: {0}")]
    InvalidGroup(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {} column {}: {}", e.line(), e.column(), e))
    }
}
