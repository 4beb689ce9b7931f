//! Benchmark protocols.
//!
//! * `synth-bench`: per seed, one complex-exponential stream and one set of
//!   initial values shared by every algorithm; full traces plus parameter
//!   snapshots at the checkpoints.
//! * `monte-carlo`: many runs of the same protocol, keeping only the final
//!   relative errors and their quartiles.
//! * `compare`: a single synth-bench run rendered as a parameter table.
//! * `fit-series`: RBF-AR(X) identification on a time series with a holdout
//!   split.
//!
//! Every output file starts with `#`-prefixed lines carrying the resolved
//! configuration (TOML), followed by a plain CSV table.

mod config;
mod output;
mod series;
mod synth;

pub use config::{
    EstimatorSettings, ExperimentConfig, ExperimentKind, SeriesSettings, SeriesTransform,
    SynthSettings,
};
pub use output::{write_fit_series, write_monte_carlo, write_synth_bench, TRACE_HEADER};
pub use series::{constant_mean_mse, fit_series, run_fit_series, FitSeriesReport, SeriesFit};
pub use synth::{
    monte_carlo, quartiles, run_compare, run_monte_carlo, run_synth_bench, synth_bench,
    AlgorithmRun, McRow, MonteCarloReport, Quartiles, SynthBenchReport, SynthRun,
};

/// Seed stream tags for [`crate::data::derive_seed`].
pub(crate) const DATA_STREAM: u64 = 1;
pub(crate) const INIT_STREAM: u64 = 2;
