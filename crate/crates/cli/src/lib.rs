//! Command line front end and HTTP service for `graphchain-core`.

pub mod cli;
pub mod client;
pub mod error;
pub mod server;

pub use cli::{run, Cli};
pub use error::CliError;
