//! Command-line harness for the `iles` toolkit: config parsing, mode
//! runners and SVG plotting.

pub mod config;
pub mod plot;
pub mod run;
