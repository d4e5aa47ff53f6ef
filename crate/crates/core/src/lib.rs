//! Purchase prediction over B2C behavior logs.
//!
//! The crate covers the whole local-validation workflow: synthetic log
//! generation, crawler cleansing, month-based splitting, time-dependent
//! instance building, the pair/user/brand feature catalog, four individual
//! models (logistic regression, gradient-boosted regression trees, random
//! forest and a time-decay scorer), two-stage blending and F1 evaluation.

pub mod config;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod instances;
pub mod log;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod shard;
pub mod submission;

pub use error::{Error, Result};
