//! Original-scale metrics, reference baselines and experiment harnesses.

mod baselines;
mod experiment;
mod metrics;
mod sweeps;

pub use baselines::{
    last_value_predict, Baseline, BaselineKind, FitContext, HistoricalAverage, PlainMlp,
};
pub use experiment::{
    evaluate_baseline, evaluate_forecaster, predict_all, prepare, run_experiment, run_prepared,
    stack_targets, Prepared, Protocol, RunOutcome,
};
pub use metrics::{compute_metrics, MetricsReport, DEFAULT_MAPE_THRESHOLD};
pub use sweeps::{
    ablation_rows, dim_rows, hp_rows, run_ablations, run_dim_sweep, run_hp_sweep, run_row,
    AblationOutcome, DimAxis, EmbeddingExport, RowOutcome, RowSpec, SweepKind, SweepResult,
    SweepRow, DEFAULT_HP_GRID, DIM_GRID,
};
