//! Experiment orchestration: configs, datasets, chain starts, runs, presets.

mod config;
mod data;
mod init;
pub mod presets;
mod run;

pub use config::{
    DataConfig, DiagnosticsConfig, ExperimentConfig, Initialization, NetworkConfig, NoiseConfig, Posterior,
    PriorConfig, SamplerConfig,
};
pub use data::{build_dataset, generate_teacher_student, load_idx, parse_idx, synthetic_n};
pub use init::{initialize_chain, repair_probit};
pub use run::{
    analyze_traces, load_traces, prepare, run_experiment, trace_file_name, ChainSummary, ExperimentSummary,
    MergeSummary, Prepared, RhatBlock, RhatSummary, TraceAnalysis,
};
