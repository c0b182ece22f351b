//! Scoring core for contextual bias measurement over cloze completions.
//!
//! Everything in this crate is pure computation over in-memory data: the
//! embedding table and similarity queries, per-token log-probability
//! records, template corpora and pronoun substitution, the cloze bias
//! score itself, and the aggregate metrics (bias ratios, KL, WEAT,
//! human agreement). File formats, HTTP, and the command line live in the
//! `clozebias` crate.
#![no_std]

extern crate alloc;

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod mock;
pub mod numeric;
pub mod scoring;

pub use error::{Error, ProviderError, Result};
