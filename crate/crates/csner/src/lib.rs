//! File formats, reports and the command-line driver for the `csner-core` tagger.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod io;
pub mod report;
