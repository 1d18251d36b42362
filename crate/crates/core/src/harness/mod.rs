//! Seeded experiments: configuration, the interaction loop, comparators,
//! baselines and the files they emit.
//!
//! Every run first draws the full disturbance sequence ("noise tape") from
//! its seed, so the learner and every comparator face the same `w_t`.

pub mod baselines;
pub mod comparators;
pub mod config;
pub mod run;
pub mod trace;

pub use config::{Algorithm, ComparatorKind, ExperimentConfig, NoiseSpec, ParamOverrides, SystemSpec};
pub use run::{
    alg_params, hlt_params_for, noise_tape, run_experiment, run_hlt, simulate, CostProvider, Plant, Reporting, RunOutput,
    StabilizedSchedule, StepReport,
};
pub use trace::{compute_regret, Summary, Trace, TraceRecord};
