//! File formats, language-model bridge, scoring pipeline and reports for
//! cloze-probability bias measurement. The arithmetic lives in
//! [`clozebias_core`].

pub mod bridge;
pub mod config;
pub mod convert;
pub mod corpus_io;
pub mod embeddings;
pub mod error;
pub mod lexicon;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
