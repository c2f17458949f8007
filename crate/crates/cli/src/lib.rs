//! File formats, configuration, verification checks and the experiment
//! harness behind the `icoadj` command line.

pub mod checks;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
