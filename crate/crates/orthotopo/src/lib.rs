//! Problem files, case-study presets, result export and the run driver for
//! [`orthotopo_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod config;
pub mod driver;
pub mod export;

pub use cases::{build_case_study, CaseError};
pub use config::{load_config, parse_config, ConfigError, ProblemConfig};
pub use driver::{run_config, sweep_p, RunOutcome, SweepRow};
pub use export::{export_fields, ExportError};
