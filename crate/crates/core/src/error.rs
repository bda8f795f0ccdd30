use std::path::PathBuf;

use thiserror::Error;

use crate::compatibility::PairId;
use crate::hla::{Allele, LociSet, Locus};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no antigen mapping for allele {allele} at locus {locus}")]
    MissingMapEntry { locus: Locus, allele: Allele },

    #[error("locus {0} is typed at antigen level but allele-level data is required")]
    ResolutionTooLow(Locus),

    #[error("locus {0} is not typed")]
    MissingLocus(Locus),

    #[error("no eplet registry entry for allele {0}")]
    MissingRegistryEntry(Allele),

    #[error("eplet scores are undefined for loci set {0}")]
    EpletsUndefined(LociSet),

    #[error("eplet scoring requested but no eplet registry was supplied")]
    RegistryUnavailable,

    #[error("invalid HLA notation {text:?}: {reason}")]
    InvalidAllele { text: String, reason: String },

    #[error("invalid registry: {0}")]
    InvalidRegistry(String),

    #[error("scoring failed for {count} pair(s); first: pair {pair}: {source}")]
    Scoring {
        pair: PairId,
        count: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("pair {pair}: {reason}")]
    InvariantViolation { pair: PairId, reason: String },

    #[error("no equity weight for subpopulation {0:?}")]
    MissingWeight(String),

    #[error("subpopulation {0:?} has no members")]
    EmptySubpopulation(String),

    #[error("brute-force packing limited to {limit} pairs, instance has {actual}")]
    TooLarge { limit: usize, actual: usize },

    #[error("match run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Which kind of problem the error reports.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidDistribution(_)
            | Error::MissingWeight(_)
            | Error::EpletsUndefined(_)
            | Error::RegistryUnavailable => ErrorClass::Config,
            Error::TooLarge { .. } => ErrorClass::Runtime,
            Error::Run { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    /// `true` for errors caused by input data (files, typings, registries)
    /// rather than by configuration values.
    pub fn is_data_error(&self) -> bool {
        self.class() == ErrorClass::Data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}
