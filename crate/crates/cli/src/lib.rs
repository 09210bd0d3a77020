//! Command line and HTTP front end for the planning engine.

pub mod cli;
pub mod engine;
pub mod server;
pub mod slice;
pub mod store;

pub use cli::run;
