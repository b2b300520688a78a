//! Configured experiments: simulation, sampling runs, output files and comparison.

pub mod check;
pub mod compare;
pub mod config;
pub mod output;
pub mod run;
pub mod simulate;
