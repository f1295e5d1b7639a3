//! Command-line front end for `driftlab_core`: a TOML configuration selects
//! one of `simulate`, `classify`, `bd-oracle`, `experiment` or `check`, flags
//! override it, and results go to stdout (one line) and to an output file.
//!
//! Exit codes: 0 success, 1 inconclusive verdict or failed check under
//! `--strict`, 2 usage or configuration error, 3 I/O error.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, Overrides, RunConfig};
pub use error::CliError;
pub use run::{run, RunOutcome};
