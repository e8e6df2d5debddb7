//! Search-query generation and evaluation for claim evidence collection.
//!
//! The crate turns factual claim sentences into web search queries, either by
//! extracting spans from precomputed linguistic annotations or by prompting a
//! text-generation backend, and then scores those queries two ways: textual
//! similarity to a human-written target query, and whether the target evidence
//! URL comes back when the query is actually executed.
//!
//! Module map:
//!
//! - [`corpus`]: claim dataset I/O, article-grouped folds, stability filtering
//! - [`rulegen`]: verbatim / named-entity / noun-phrase query generators
//! - [`promptgen`]: prompt templates, generation backends, in-context example selection
//! - [`textmetrics`]: character Rouge, Levenshtein, Pearson
//! - [`searcheval`]: search engines, snapshot store, FA/FM/FO and MRR@K
//! - [`ensemble`]: Borda-count fusion of per-method rankings
//! - [`harness`]: cross-validated experiment runner and reports
//!
//! Batch work (scoring, per-sample search, few-shot screening) runs on rayon
//! when the `parallel` feature is enabled and sequentially otherwise; results
//! are identical either way.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod par;
pub mod promptgen;
pub mod rulegen;
pub mod searcheval;
pub mod textmetrics;

pub use error::{Error, Result};
