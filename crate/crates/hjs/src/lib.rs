//! Command line, configuration files, path formats and the parallel
//! ensemble runner for [`hjs_core`].
//!
//! All outputs are written through a temporary file and renamed into place.
//! Path `i` of a run with master seed `s` is simulated from
//! `hjs_core::path_seed(s, i)`, so files do not depend on the worker count.

pub mod cli;
pub mod commands;
pub mod config;
pub mod ensemble;
pub mod formats;
pub mod manifest;

pub use hjs_core as core;
