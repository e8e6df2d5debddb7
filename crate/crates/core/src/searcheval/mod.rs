//! Query execution and search-result scoring.
//!
//! A generated query is judged by whether the claim's target URL shows up in
//! the first page of results. Engines are not deterministic, so each query is
//! executed `n` times and the per-execution lists are scored together:
//! found-all / found-majority / found-once percentages plus MRR@K over every
//! individual list.

mod engine;
mod metrics;
mod snapshot;
mod url;

pub use engine::{
    execute_repeated, BingEngine, MockEngine, RateLimiter, ResultList, Retrying, SearchEngine,
};
pub use metrics::{found_metrics, mrr_at_k, FoundRule, SampleSearchOutcome, SearchMetrics};
pub use snapshot::SnapshotStore;
pub use url::{normalize_url, urls_match};

/// Result-page depth used throughout (first page of results).
pub const DEFAULT_K: usize = 10;
/// Executions per query.
pub const DEFAULT_EXECUTIONS: usize = 3;
