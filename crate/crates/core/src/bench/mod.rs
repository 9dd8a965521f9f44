//! Benchmark harness: instances, experiment orchestration, trace files and rate fits.

pub mod experiment;
pub mod fit;
pub mod instance;
pub mod trace_csv;
pub mod verify;

pub use experiment::{comparison_table, run_experiment, Algorithm, ExperimentOutcome, ExperimentSpec, GammaArg, RunFailure};
pub use fit::fit_linear_rate;
pub use instance::{
    balanced_leading_eigenvalue, generate_pca_instance, load_instance, save_instance, InstanceMeta, PcaInstance, Spectrum, SpectrumArg,
};
pub use trace_csv::{load_trace, read_trace_csv, save_trace, write_trace_csv, TRACE_HEADER};
pub use verify::{parse_checks, verify_objective, Check, CheckSummary, VerifyReport, VerifySpec};
