//! File formats, configuration, threaded orchestration, validation suites
//! and the command-line front end for `hetgibbs-core`.

pub mod chainfile;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod oracle;
pub mod run;
pub mod validate;

pub use error::{Error, Result};
