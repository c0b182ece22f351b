//! Language-model bridge: log-probability providers and their wire formats.
//!
//! * [`record`]: the JSON-lines record shared by logprob files and the HTTP
//!   protocol, plus its validator.
//! * [`FileStore`]: serves records from a logprob file.
//! * [`HttpProvider`]: `POST /v1/logprobs` client with retries and bounded
//!   concurrency.
//! * [`CachedProvider`]: memoizes any provider by sentence id.
//!
//! The deterministic mock lives in `clozebias_core::mock`.

mod cache;
mod file_store;
mod http;
pub mod record;

pub use cache::CachedProvider;
pub use file_store::FileStore;
pub use http::{HttpOptions, HttpProvider, ENV_URL};
pub use record::{LogprobRecord, ManifestLine};
