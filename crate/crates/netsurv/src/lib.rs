//! File formats, parallel execution and the command-line front end for
//! [`netsurv_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod manifest;
pub mod num;

pub use error::CliError;
pub use exec::RayonExecutor;
