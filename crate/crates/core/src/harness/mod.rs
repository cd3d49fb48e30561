//! Monte Carlo benchmark: configuration, trial execution, RMSE and bound
//! aggregation, a cross-power baseline, and result files.

pub mod baseline;
pub mod config;
pub mod emit;
pub mod run;
pub mod seed;

pub use baseline::{baseline_estimate, baseline_grid_search, BaselineModel};
pub use config::{Axis, ChannelConfig, EstimatorKind, PdpSource, RunConfig, SignalConfig, Sweep};
pub use emit::{csv_string, emit_results, ResultDocument, CSV_HEADER};
pub use run::{
    config_scenario, localize, run_monte_carlo, run_point, run_trial, simulate_trial, EstimateRecord, EstimatorSummary, PointModel, PointResult,
    SweepResult, TrialData, TrialRecord,
};
