//! Domain-adapted text embeddings for telecom documentation.
//!
//! The crate covers the whole loop: cleaning and chunking standards text,
//! building triplet and retrieval datasets, extending a byte-level BPE
//! tokenizer with domain terms, fine-tuning a small encoder with a triplet
//! objective, evaluating it, and serving dense/sparse/hybrid retrieval.

// The numeric kernels index several parallel buffers with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod evaluation;
pub mod index;
pub mod io_util;
pub mod pipeline;
pub mod querygen;
pub mod synth;
pub mod tokenizer;
pub mod trainer;

use thiserror::Error;

/// Version of every on-disk format this build reads and writes.
pub const FORMAT_VERSIONS: &[(&str, u32)] = &[
    ("checkpoint", encoder::CHECKPOINT_VERSION),
    ("dense_index", index::DENSE_VERSION),
    ("sparse_index", index::SPARSE_VERSION),
    ("tokenizer", tokenizer::TOKENIZER_FORMAT_VERSION),
];

/// Any error the library can produce, tagged by the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Tokenizer(#[from] tokenizer::TokenizerError),
    #[error(transparent)]
    Encoder(#[from] encoder::EncoderError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Index(#[from] index::IndexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Stable kind name, e.g. `IoError` or `CheckpointMismatch`.
    pub fn name(&self) -> &'static str {
        use corpus::CorpusError as C;
        use dataset::DatasetError as D;
        use encoder::EncoderError as En;
        use evaluation::EvalError as Ev;
        use index::IndexError as I;
        use tokenizer::TokenizerError as T;
        use trainer::TrainError as Tr;
        fn enc(e: &En) -> &'static str {
            match e {
                En::EmptyInput => "EmptyInput",
                En::IdOutOfRange { .. } => "IdOutOfRange",
                En::DegenerateOutput => "DegenerateOutput",
                En::BadDims(_) => "BadDims",
                En::OffsetMismatch { .. } => "OffsetMismatch",
                En::Batch { source, .. } => enc(source),
                En::Format(_) => "FormatError",
                En::ShapeMismatch(_) => "ShapeMismatch",
                En::Io(_) => "IoError",
            }
        }
        match self {
            Error::Corpus(e) => match e {
                C::EmptyDocument(_) => "EmptyDocument",
                C::BadConfig(_) => "ConfigError",
                C::DuplicateDocId(_) => "DuplicateDocId",
                C::InvalidUtf8 { .. } => "InvalidUtf8",
                C::Parse { .. } => "ParseError",
                C::Io(_) => "IoError",
            },
            Error::Dataset(e) => match e {
                D::Parse { .. } => "ParseError",
                D::InvariantViolation { .. } => "InvariantViolation",
                D::EmptyDataset => "EmptyDataset",
                D::NoCandidates => "NoCandidates",
                D::CorpusTooSmall { .. } => "CorpusTooSmall",
                D::EmptyChunk(_) => "EmptyChunk",
                D::Io(_) => "IoError",
            },
            Error::Tokenizer(e) => match e {
                T::CorpusEmpty => "CorpusEmpty",
                T::VocabTooSmall(_) => "ConfigError",
                T::Format(_) => "FormatError",
                T::Io(_) => "IoError",
            },
            Error::Encoder(e) => enc(e),
            Error::Train(e) => match e {
                Tr::EmptyDataset => "EmptyDataset",
                Tr::BadConfig(_) => "ConfigError",
                Tr::ShapeMismatch(_) => "ShapeMismatch",
                Tr::Encoder { source, .. } => enc(source),
            },
            Error::Eval(e) => match e {
                Ev::EmptyDataset => "EmptyDataset",
                Ev::EmptyPairs => "EmptyPairs",
                Ev::MissingChunk(_) => "MissingChunk",
                Ev::LengthMismatch(..) => "LengthMismatch",
                Ev::DegenerateInput(_) => "DegenerateInput",
                Ev::TooFewPoints { .. } => "TooFewPoints",
                Ev::PerplexityTooLarge { .. } => "PerplexityTooLarge",
                Ev::BadArgument(_) => "ConfigError",
                Ev::Encoder(e) => enc(e),
            },
            Error::Index(e) => match e {
                I::EmptyCorpus => "EmptyCorpus",
                I::CheckpointMismatch { .. } => "CheckpointMismatch",
                I::IndexMismatch => "IndexMismatch",
                I::BadK | I::BadLambda(_) => "ConfigError",
                I::Format(_) => "FormatError",
                I::Encoder(e) => enc(e),
                I::Io(_) => "IoError",
            },
            Error::Io(_) => "IoError",
            Error::Config(_) => "ConfigError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
