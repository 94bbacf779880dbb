//! Command line and HTTP front end for the shelfscan library.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod server;
