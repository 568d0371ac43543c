//! Crate-level error type.
//!
//! Each module defines its own focused error enum; this wrapper exists so
//! the harness and CLI can funnel every failure through one type and map it
//! onto a process exit code.

use std::fmt;

use crate::corpus::CorpusError;
use crate::losses::LossError;
use crate::model::ModelError;
use crate::tensor::TensorError;
use crate::trainer::TrainError;

#[derive(Debug)]
pub enum Error {
    /// Bad configuration: unknown keys, unparseable values, invalid
    /// combinations. Exit code 2.
    Config(String),
    /// Corpus construction, loading, or validation failed. Exit code 3.
    Corpus(CorpusError),
    /// Model structure or checkpoint I/O failed. Exit code 3.
    Model(ModelError),
    /// File-system trouble outside checkpoints. Exit code 3.
    Io(std::io::Error),
    /// Tensor-level contract violation. Exit code 4.
    Tensor(TensorError),
    /// Loss-level contract violation. Exit code 4.
    Loss(LossError),
    /// Training produced a non-finite value. Exit code 4.
    Numeric(String),
}

impl Error {
    /// The process exit code the CLI reports for this failure class:
    /// 2 = configuration, 3 = data, 4 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Corpus(_) | Error::Model(_) | Error::Io(_) => 3,
            Error::Tensor(_) | Error::Loss(_) | Error::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Corpus(e) => write!(f, "corpus error: {e}"),
            Error::Model(e) => write!(f, "model error: {e}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Tensor(e) => write!(f, "tensor error: {e}"),
            Error::Loss(e) => write!(f, "loss error: {e}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<CorpusError> for Error {
    fn from(e: CorpusError) -> Self {
        Error::Corpus(e)
    }
}

impl From<ModelError> for Error {
    fn from(e: ModelError) -> Self {
        Error::Model(e)
    }
}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        Error::Tensor(e)
    }
}

impl From<LossError> for Error {
    fn from(e: LossError) -> Self {
        Error::Loss(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config { .. } | TrainError::ChunkCoverage(_) => {
                Error::Config(e.to_string())
            }
            // Optimizer failures are bad hyperparameters surfacing late.
            TrainError::Optim(_) => Error::Config(e.to_string()),
            TrainError::NonFinite { .. } | TrainError::Memorization { .. } => {
                Error::Numeric(e.to_string())
            }
            TrainError::Corpus(c) => Error::Corpus(c),
            TrainError::Model(m) => Error::Model(m),
            TrainError::Loss(l) => Error::Loss(l),
            TrainError::Tensor(t) => Error::Tensor(t),
            TrainError::Io(i) => Error::Io(i),
        }
    }
}
