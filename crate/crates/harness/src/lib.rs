//! Experiment harness for percolation on graphon-limit graph sequences.
//!
//! Each experiment takes an [`ExperimentConfig`], runs replicated percolation
//! or branching simulations, and returns a [`Report`]: a table plus a list of
//! [`Check`]s, each naming its oracle value, measured value, tolerance and
//! seed count.

use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, OmegaRule};
pub use experiments::run;
pub use report::{emit, Cell, Check, Format, Relation, Report};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] graphon_percolation::Error),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
