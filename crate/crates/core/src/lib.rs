//! Synthetic Big Five dialogue data generation, trait classifiers and
//! their evaluation.
//!
//! The pipeline: [`personas`] define twenty prompt-conditioned agents,
//! [`dialogue_gen`] simulates conversations with them through a
//! [`dialogue_gen::CompletionProvider`] and keeps the agent turns as labeled
//! messages, [`datastore`] persists and splits corpora, [`classifier`]
//! trains the together/separate/adapter architectures, and [`evaluation`]
//! reports accuracy and the confidence/difficulty correlation.

pub mod classifier;
pub mod config;
pub mod datastore;
pub mod dialogue_gen;
pub mod error;
pub mod evaluation;
pub mod hashing;
pub mod personas;

pub use error::{Error, Result};
