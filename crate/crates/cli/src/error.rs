use std::path::PathBuf;

use graphchain_core::chain::ChainError;
use graphchain_core::embed::EmbedError;
use graphchain_core::exemplar::ExemplarError;
use graphchain_core::index::IndexError;
use graphchain_core::orchestrator::OrchestratorError;
use graphchain_core::planner::PlanError;
use graphchain_core::registry::RegistryError;
use graphchain_core::tools::StoreError;
use graphchain_core::GraphError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("chain: {0}")]
    Chain(#[from] ChainError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("embedding: {0}")]
    Embed(#[from] EmbedError),
    #[error("exemplars: {0}")]
    Exemplar(#[from] ExemplarError),
    #[error("planning: {0}")]
    Plan(#[from] PlanError),
    #[error("graph store: {0}")]
    Store(#[from] StoreError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("server: {0}")]
    Server(String),
    #[error("index audit failed\n{0}")]
    Unsound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fmt(#[from] std::fmt::Error),
}

impl CliError {
    /// Process exit code: 2 for a failed audit, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unsound(_) => 2,
            _ => 1,
        }
    }
}
