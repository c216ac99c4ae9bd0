use std::io;

use crate::afm::Shape;

pub type Result<T, E = CrlError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CrlError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("version mismatch: expected 1, found {0}")]
    UnsupportedVersion(u32),

    #[error("truncated header: file ends inside the {0}")]
    TruncatedHeader(&'static str),

    #[error("truncated records: header declares {declared}, file holds {complete} complete")]
    TruncatedRecords { declared: u64, complete: u64 },

    #[error("trailing bytes: {0} unread bytes after the last record")]
    TrailingBytes(usize),

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("declared dimension {0} exceeds the 2^24 per-record cap")]
    DimTooLarge(u64),

    #[error("non-finite value at record {record}, component {index}")]
    NonFinite { record: usize, index: usize },

    #[error("invalid utf-8 in {0}")]
    InvalidUtf8(&'static str),

    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),

    #[error("record {record} has class id {class_id} but only {num_labels} labels exist")]
    ClassIdOutOfRange {
        record: usize,
        class_id: u32,
        num_labels: usize,
    },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("invalid shape {0}: every extent must be at least 1")]
    InvalidShape(Shape),

    #[error("cannot build a class representative from zero instances")]
    EmptyInstances,

    #[error("bundle has no records")]
    EmptyBundle,

    #[error("class {0:?} has no instances after capping")]
    EmptyClass(String),

    #[error("class representative for {0:?} is the zero vector")]
    ZeroVector(String),

    #[error("zero-norm operand: cosine similarity is undefined")]
    ZeroNorm,

    #[error("invalid pooling: {0}")]
    InvalidPooling(String),

    #[error("duplicate class name {0:?} across models")]
    DuplicateClass(String),

    #[error("model has no class representatives")]
    EmptyModel,

    #[error("top-k of {k} requested from a model with {classes} classes")]
    InvalidTopK { k: usize, classes: usize },

    #[error("need at least {required} classes, model has {found}")]
    TooFewClasses { required: usize, found: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("sample contains a non-finite value")]
    NonFiniteSample,

    #[error("class-mean placement failed after {attempts} attempts; separation too large for the dimensionality")]
    SeparationUnreachable { attempts: usize },

    #[error("invalid model metadata: {0}")]
    InvalidMetadata(String),

    #[error("label tables differ between {0}")]
    LabelTableMismatch(&'static str),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}
