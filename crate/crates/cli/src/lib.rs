//! Library behind the `jumpctl` binary.

pub mod builtin;
pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod plots;
pub mod svg;
