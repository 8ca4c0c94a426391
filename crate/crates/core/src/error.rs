use std::path::PathBuf;

use crate::tokenizer::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("DuplicateToken: {0:?} appears more than once")]
    DuplicateToken(String),
    #[error("NonContiguousIds: expected id {expected}, found {found}")]
    NonContiguousIds { expected: usize, found: usize },
    #[error("UnknownMergeSymbol: {0:?} is not in the vocabulary")]
    UnknownMergeSymbol(String),
    #[error("MissingSpecialToken: vocabulary has no {0:?} entry")]
    MissingSpecialToken(&'static str),
    #[error("InvalidTokenId: {id} is out of range for vocabulary size {vocab_size}")]
    InvalidTokenId { id: TokenId, vocab_size: usize },

    #[error("EmptyWordList")]
    EmptyWordList,
    #[error("InvalidFraction: {0} is not in (0, 1]")]
    InvalidFraction(f64),
    #[error("EmptyExpansion")]
    EmptyExpansion,
    #[error("AllSpecialTokens: the expansion contains only bos/eos/unk ids")]
    AllSpecialTokens,
    #[error("FingerprintMismatch: prune set was built for vocabulary {found}, loaded vocabulary is {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("MalformedFile: {0}")]
    MalformedFile(String),

    #[error("EmptyCorpus")]
    EmptyCorpus,
    #[error("InvalidOrder: n-gram order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("InvalidAlpha: smoothing constant must be finite and > 0, got {0}")]
    InvalidAlpha(f64),
    #[error("InvalidLogits: {0}")]
    InvalidLogits(String),

    #[error("AllMasked: every vocabulary entry is pruned")]
    AllMasked,
    #[error("NoCandidates: no unmasked token is available")]
    NoCandidates,
    #[error("EosPruned: the end-of-sequence id {0} may not be pruned")]
    EosPruned(TokenId),
    #[error("InvariantBreach: {0}")]
    InvariantBreach(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("LengthMismatch: {generations} generations but {references} references")]
    LengthMismatch {
        generations: usize,
        references: usize,
    },
    #[error("InvalidCorpus: {0}")]
    InvalidCorpus(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 usage/validation, 3 data/fingerprint, 4 internal invariant breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::InvalidFraction(_)
            | Error::InvalidConfig(_)
            | Error::InvalidOrder(_)
            | Error::InvalidAlpha(_)
            | Error::LengthMismatch { .. }
            | Error::EmptyWordList
            | Error::EmptyExpansion
            | Error::AllSpecialTokens
            | Error::EmptyCorpus
            | Error::EosPruned(_) => 2,
            Error::DuplicateToken(_)
            | Error::NonContiguousIds { .. }
            | Error::UnknownMergeSymbol(_)
            | Error::MissingSpecialToken(_)
            | Error::InvalidTokenId { .. }
            | Error::FingerprintMismatch { .. }
            | Error::MalformedFile(_)
            | Error::InvalidCorpus(_)
            | Error::Io { .. }
            | Error::Json { .. } => 3,
            Error::InvalidLogits(_)
            | Error::InvariantBreach(_)
            | Error::AllMasked
            | Error::NoCandidates => 4,
        }
    }
}
