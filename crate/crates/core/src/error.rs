use std::fmt;
use std::io;

use crate::dataset::PointId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty base dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dataset too small for k (k = {k}, points = {points})")]
    DatasetTooSmall { k: usize, points: usize },

    #[error("dataset too small after deletions (k = {k}, remaining points = {remaining})")]
    TooSmallAfterDeletions { k: usize, remaining: usize },

    #[error("deletion ids not present in dataset: {}", IdList(.0))]
    MissingIds(Vec<PointId>),

    #[error("add-delete conflict in batch: ids {} are introduced by this batch", IdList(.0))]
    AddDeleteConflict(Vec<PointId>),

    #[error("unsupported snapshot: {0}")]
    UnsupportedSnapshot(String),

    #[error("corrupt snapshot in section [{section}] at line {line}: {message}")]
    CorruptSnapshot {
        section: String,
        line: usize,
        message: String,
    },

    #[error("parameter mismatch: snapshot has {snapshot}, requested {requested}")]
    ParamMismatch { snapshot: String, requested: String },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn corrupt(section: &str, line: usize, message: impl Into<String>) -> Self {
        Error::CorruptSnapshot {
            section: section.to_string(),
            line,
            message: message.into(),
        }
    }
}

struct IdList<'a>(&'a [PointId]);

impl fmt::Display for IdList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 10;
        for (i, id) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{id}")?;
        }
        if self.0.len() > SHOWN {
            write!(f, ", ... ({} total)", self.0.len())?;
        }
        Ok(())
    }
}
