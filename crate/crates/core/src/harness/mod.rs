//! Reproducible experiments driven by a flat config file.

pub mod config;
pub mod experiments;
pub mod registry;

pub use config::{ExperimentConfig, RadiusRule};
pub use experiments::{
    run_compile, run_complexity, run_convergence, run_shared, CompileSource, CompileSummary,
    ComplexityRow, ErrorReport, SharedRow,
};
