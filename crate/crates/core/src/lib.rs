//! Supply-chain analysis for pre-trained model (PTM) reuse.
//!
//! The pipeline has separable stages that share one embedded [`store::Store`]:
//!
//! - [`store`] ingests registry snapshots and exports tables as JSON-lines / CSV.
//! - [`signatures`] loads the catalog of PTM-loading call signatures.
//! - [`analyzer`] parses Python sources, resolves imports and confirms signature matches.
//! - [`scanner`] walks repository trees with a cheap textual pre-filter in front of the analyzer.
//! - [`mapper`] turns usage records into application-to-model links.
//! - [`license`] classifies licenses and checks compatibility along those links.
//! - [`extract`] pulls structured metadata out of model cards through a completion client.
//! - [`stats`] computes distribution and time-series reports.
//!
//! Interchangeable strategies (completion clients, extraction pipelines, retrieval
//! scorers, stats reports, parser front-ends) are registered by name in a
//! [`strategy::StrategyRegistry`] and selected at runtime.

pub mod analyzer;
pub mod extract;
pub mod license;
pub mod mapper;
pub mod model;
pub mod strategy;
pub mod scanner;
pub mod signatures;
pub mod stats;
pub mod store;
pub mod taxonomy;

pub use model::{
    MatchStrength, ModelName, PtmAppLink, PtmId, PtmPackage, PtmPtmLink, Registry, RepoId,
    Repository, UsageRecord,
};
