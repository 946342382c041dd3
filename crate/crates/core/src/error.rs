use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("at offset {offset}: {message}")]
    Expr { offset: usize, message: String },

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("invalid context: {0}")]
    Context(String),

    #[error("{table}, row {row}, column {column}: {message}")]
    Coercion {
        table: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate key {key} in base table {table}")]
    DuplicateKey { table: String, key: String },

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("join has no shared columns between [{left}] and [{right}]")]
    NoSharedColumns { left: String, right: String },

    #[error("no view binding matches context `{0}`")]
    NoBinding(String),

    #[error("no transformation rule matches {0}")]
    NoRule(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("transform: {0}")]
    Transform(String),

    #[error("invalid parameter: {0}")]
    Param(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
