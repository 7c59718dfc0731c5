//! Experiment orchestration.
//!
//! An [`ExperimentConfig`] names a dataset, a split, a lookback, a list of
//! horizons and an estimator with its hyperparameters. [`run_experiment`]
//! expands it into a (horizon × seed × λ) grid, fits every point on a
//! worker pool and writes one directory of flat files:
//!
//! * `config.json` — the effective configuration
//! * `records.jsonl` — one [`ResultRecord`] per grid point, in grid order
//! * `summary.csv` — mean and sample standard deviation over seeds
//! * `timings.json` — wall-clock seconds per point (kept apart so the other
//!   files are byte-identical across reruns)
//! * `artifacts/` — singular-value spectra and per-horizon roots
//!
//! The study functions reuse the same fitting path for the scaling,
//! root-recovery, channel-strategy and λ-sensitivity tables.

mod config;
mod run;
mod studies;

pub use config::{DatasetSpec, EstimatorKind, EstimatorParams, EstimatorSpec, ExperimentConfig, RankChoice, StudySpec};
pub use run::{
    execute, fit_estimator, grid_params, load_series, mean_std, prepare_splits, run_experiment, spectrum_report,
    summarize, write_outputs, ChannelData, Fitted, PointResult, PointStatus, ResultRecord, SummaryRow,
};
pub use studies::{
    ci_inc_comparison, lambda_sensitivity, reference_roots, root_recovery_study, run_study, scaling_study,
    ComparisonRow, LambdaRow, RootRecoveryRow, ScalingRow, StudyOutput, StudySetup,
};
