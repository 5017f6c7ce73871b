//! Declarative experiment runner for the anisotropic total variation flow.
//!
//! Four subcommands, each driven by one TOML config:
//!
//! - `run`: evolve an initial datum and write snapshots, images, contours,
//!   cross sections, facet reports, a diagnostics table and a manifest
//! - `oracle`: rasterize a closed-form solution at given times
//! - `compare`: measure a finished run against an oracle or another run
//! - `suite`: run a list of the above and summarise them in one manifest
//!
//! Exit codes: 0 success, 1 validation error, 2 solver non-convergence,
//! 3 comparison failure.

pub mod bundled;
pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod oracle;
pub mod run;
pub mod suite;

pub use error::{CliError, Result};
