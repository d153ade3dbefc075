//! Configuration, convergence studies and rate fitting.

pub mod config;
pub mod fit;
pub mod study;

pub use config::{ConfigError, StudyConfig, StudyKind};
pub use fit::{fit_rate, FitError, RateFit};
pub use study::{run_study, write_outputs, ErrorRow, ErrorTable, StudyError};
