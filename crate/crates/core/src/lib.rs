//! Budget-constrained batch Bayesian active learning.
//!
//! The crate trains an MC-dropout classifier on precomputed embeddings, scores
//! unlabeled pools by batch mutual information (BatchBALD), and picks batches
//! under per-batch cost budgets with either a dynamic cost threshold or a
//! plain greedy rule. [`runner`] replays the full active-learning loop and
//! [`report`] aggregates the resulting learning curves.

pub mod acquisition;
pub mod cli;
pub mod cost;
pub mod data;
pub mod error;
pub mod neural;
pub mod posterior;
pub mod report;
pub mod runner;
pub mod seeds;
pub mod strategies;

pub use error::{Error, Result};
