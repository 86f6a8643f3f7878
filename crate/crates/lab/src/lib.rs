//! Replicated experiments on top of the `fmgd` estimators: spec files,
//! Monte Carlo sweeps, I/O benchmarks and their CSV/SVG reports.

pub mod error;
pub mod experiments;
pub mod report;
pub mod spec;
pub mod svg;

pub use error::{LabError, Result};
pub use experiments::run_experiment;
pub use report::ExperimentReport;
pub use spec::{ExperimentSpec, Kind, Scale};
