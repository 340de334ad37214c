//! Experiment runner: JSON configs in, per-step CSV traces out.

mod config;
mod metrics;
mod run;
mod studies;
mod verify;

pub use config::{
    default_quadratic_diag, load_config, parse_config, BccdSpec, DataSpec, ExperimentConfig, FullFdSpec, InitSpec,
    MethodSpec, ObjectiveSpec, RandomSpec,
};
pub use metrics::{emit_metrics, fmt_f64, load_metrics, sidecar_path, MetricRow, MetricsWriter, RunRecord, CSV_HEADER};
pub use run::{build_objective, build_optimizer, initial_store, run_experiment, BuiltObjective};
pub use studies::{
    apply_axis, budget_error_study, compare_budget_matched, sweep, BudgetPoint, BudgetStudy, Comparison, SweepAxis,
    SweepRecord,
};
pub use verify::{verify_suite, Check};
