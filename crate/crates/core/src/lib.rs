//! Deterministic corpus forging and representation analysis for
//! cross-lingual extractive question answering.
//!
//! The crate builds artificial variants of SQuAD-format datasets
//! (translated-span recovery, vocabulary-permuted "unseen" languages,
//! dictionary code-switching, word-order re-linearization), scores
//! predictions with multilingual EM/F1, and compares exported token
//! representations (answer-span cosine, PCA, SVCCA, orthogonal Procrustes).
//!
//! Batch operations run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to a sequential loop otherwise; see
//! [`Execution`]. Output order never depends on the execution strategy.

pub mod codeswitch;
pub mod corpus;
mod error;
mod exec;
pub mod metrics;
pub mod permute;
pub mod pipeline;
pub mod recovery;
pub mod repr;
pub mod script;
pub mod typology;

pub use error::{Error, Result};
pub use exec::Execution;

/// Version stamp written into manifests and run reports.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
