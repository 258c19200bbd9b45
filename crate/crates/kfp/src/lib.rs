//! File formats, cached evaluation and the command line for `kfp-core`.

pub mod cache;
pub mod cli;
pub mod datum;
pub mod exit;
pub mod expr;
pub mod problem;
pub mod table;
