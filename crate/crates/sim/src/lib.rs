//! Synthetic benchmarks for the preference-learning engine: analytic ground
//! truths, a simulated human that answers with a choice and a confidence
//! level, and seeded trial and experiment runners.

pub mod error;
pub mod export;
pub mod method;
pub mod oracle;
pub mod task;
pub mod trial;

pub use error::{Result, SimError};
pub use export::{export_results, read_json_summary, ExportFormat};
pub use method::{MethodConfig, MethodVariant, TaskProfile};
pub use oracle::{oracle_answer, quantize_level, Choice, ChoiceMode, Oracle, OracleAnswer, OracleConfig};
pub use task::{ground_truth_eval, GroundTruthTask, TaskKind};
pub use trial::{
    default_oracle_seed, derive_seed, run_experiment, run_trial, ExperimentSummary, MethodSummary, TrialResult,
};
