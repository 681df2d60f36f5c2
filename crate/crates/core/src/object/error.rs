use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

/// Failure categories shared by every backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    PoolNotFound,
    ContainerNotFound,
    ObjectNotFound,
    KeyNotFound,
    AlreadyExists,
    InvalidName,
    InvalidObjectId,
    IoFailure,
    Corrupt,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct StoreError {
    pub kind: ErrorKind,
    pub detail: String,
}

impl StoreError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        self.kind
    }

    pub fn is(&self, kind: ErrorKind) -> bool {
        self.kind == kind
    }

    pub(crate) fn io(context: impl fmt::Display, err: io::Error) -> Self {
        Self::new(ErrorKind::IoFailure, format!("{context}: {err}"))
    }
}

pub type StoreResult<T> = Result<T, StoreError>;
