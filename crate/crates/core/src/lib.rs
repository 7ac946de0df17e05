//! Question answering over graphs by retrieved, planned and monitored API
//! chains.
//!
//! The pipeline: a user's question and graph come in; the graph is
//! sequentialized into label paths ([`sequentializer`]); analysis APIs are
//! retrieved by embedding similarity over a τ-MG proximity graph
//! ([`registry`], [`index`]); a chain of API calls is planned by rollout
//! search scored with a node-matching loss ([`planner`], [`metric`]); and
//! the confirmed chain is executed step by step with an event-sourced
//! session log ([`orchestrator`]).

pub mod chain;
pub mod embed;
pub mod exec;
pub mod exemplar;
pub mod ged;
pub mod graph;
pub mod index;
pub mod metric;
pub mod orchestrator;
pub mod planner;
pub mod registry;
pub mod sequentializer;
pub mod tools;

pub use chain::{ApiCall, ApiChain, Binding, END};
pub use exec::Exec;
pub use graph::{parse_graph, serialize_graph, Graph, GraphError, NodeId};
