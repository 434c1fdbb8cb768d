//! Command-line front end for `safe-core`: file formats, reports and the
//! subcommands behind the `safe` binary.

pub mod commands;
pub mod io;
pub mod report;
