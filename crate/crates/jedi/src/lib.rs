//! Datasets on disk, simulation grids, the `jedi` command line and the
//! teaching service built on `jedi-core`.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod service;
pub mod trace;

pub use error::{Error, Result};
