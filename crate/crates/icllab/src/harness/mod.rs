//! CLI plumbing: configuration parsing, deterministic randomness scoping,
//! CSV/JSON report emission, and golden-file regression.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ModelConfig, RunConfig, Scenario, Subcommand, DEFAULT_SEED, SEED_ENV_VAR};
pub use report::{emit_file, fmt_float, sha256_hex, CheckOutcome, CsvTable, FileDigest, RunReport};
pub use runner::{run, RunContext};
