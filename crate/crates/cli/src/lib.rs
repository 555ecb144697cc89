//! Library half of the `veritask` command-line tool: manifest parsing
//! and the experiment pipeline. The binary in `main.rs` is a thin clap
//! wrapper over these modules so integration tests can drive the same
//! code in-process.

pub mod experiment;
pub mod manifest;
