//! Configuration parsing, report formatting and subcommand drivers for the `adelim` binary.

pub mod commands;
pub mod config;
pub mod report;
