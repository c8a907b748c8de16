//! File formats, configuration and subcommands around `chnst-core`.

pub mod commands;
pub mod config;
pub mod output;
pub mod vtk;
