//! Batch interface to the tranche option bound engine: JSON model and job
//! documents in, CSV tables out.

pub mod error;
pub mod io;
pub mod jobs;
pub mod report;

pub use error::{CliError, Result};
pub use io::{build_model, load_model, load_spec, save_model, JobSpec, Model, ModelDoc};
pub use jobs::{run_job, Command, JobOptions, DEFAULT_PATHS};
pub use report::Report;
