use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::pqgram::GramShape;
use crate::tree::{LabelError, ParseError, TreeShapeError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid label: {0}")]
    Label(#[from] LabelError),
    #[error("invalid tree: {0}")]
    Shape(#[from] TreeShapeError),
    #[error("invalid gram shape p={p} q={q}: both must be at least 1")]
    InvalidShape { p: usize, q: usize },
    #[error("gram shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: GramShape, found: GramShape },
    #[error("label tuple has {found} labels, expected {expected}")]
    TupleWidth { expected: usize, found: usize },
    #[error("profiles were built against different vocabularies")]
    VocabularyMismatch,
    #[error("weight vector has dimension {found}, vocabulary needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty collection")]
    EmptyCollection,
    #[error("class {label} has {size} members, at least {needed} required")]
    DegenerateClass { label: usize, size: usize, needed: usize },
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("model file, line {line}: {message}")]
    Model { line: usize, message: String },
    #[error("unsupported model file version {0:?}")]
    ModelVersion(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
