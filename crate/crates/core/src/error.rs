use thiserror::Error;

use crate::atomio::FileKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table is empty")]
    EmptyTable,
    #[error("bundle has no dynamics rows")]
    EmptyBundle,
    #[error("{kind} table is missing required column `{column}`")]
    MissingRequiredColumn { kind: FileKind, column: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: bad coordinates: {reason}")]
    BadCoordinates { line: u64, reason: String },
    #[error("line {line}: bad timestamp `{value}`")]
    BadTimestamp { line: u64, value: String },
    #[error("unknown atomic file suffix: {0}")]
    UnknownSuffix(String),
    #[error("record {index} has {got} property values, header declares {expected}")]
    HeterogeneousRecords { index: usize, expected: usize, got: usize },
    #[error("duplicate {what}: {key}")]
    DuplicateKey { what: &'static str, key: String },
    #[error("{what} {id} does not reference a known geographical unit")]
    ForeignKey { what: &'static str, id: String },
    #[error("two rows fill the same tensor cell: {0}")]
    DuplicateCell(String),
    #[error("duplicate edge {origin} -> {des}")]
    DuplicateEdge { origin: u64, des: u64 },
    #[error("timestamps are not on a regular grid: {0}")]
    IrregularGrid(String),
    #[error("unknown weight column `{0}`")]
    UnknownWeightColumn(String),
    #[error("rel {rel_id} has a non-numeric weight")]
    NonNumericWeight { rel_id: u64 },
    #[error("rel {rel_id} has negative weight {weight}")]
    NegativeWeight { rel_id: u64, weight: f64 },
    #[error("grid index ({row}, {col}) outside {rows}x{cols} grid")]
    GridOutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("series of {total} steps is too short for {input}+{output} windows")]
    SeriesTooShort { total: usize, input: usize, output: usize },
    #[error("split produced an empty partition (train {train}, valid {valid}, test {test})")]
    EmptySplit { train: usize, valid: usize, test: usize },
    #[error("every cell is masked; nothing to score")]
    AllMasked,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no observed training data")]
    NoTrainingData,
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("duplicate observations: {0}")]
    DuplicateObservation(String),
    #[error("line {line}: cannot parse timestamp `{value}`")]
    UnparseableTimestamp { line: u64, value: String },
    #[error("mapping column `{0}` not found in input")]
    MissingMappingColumn(String),
    #[error("line {line}: expected {expected} fields, found {got}")]
    RaggedRow { line: u64, expected: usize, got: usize },
    #[error("missing value for model `{model}`, dataset `{dataset}`, metric `{metric}`")]
    MissingCell { model: String, dataset: String, metric: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
