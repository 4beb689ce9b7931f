use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, DATA_STREAM, INIT_STREAM};
use crate::data::{derive_seed, gen_complex_exponential, sample_initial_values};
use crate::error::Result;
use crate::model::{ComplexExponential3, ParameterState};
use crate::recursive::{run_stream, Algorithm, StepTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub traces: Vec<StepTrace>,
}

impl AlgorithmRun {
    pub fn final_error(&self) -> f64 {
        self.traces
            .last()
            .and_then(|t| t.rel_error)
            .unwrap_or(f64::NAN)
    }

    pub fn rejected_steps(&self) -> usize {
        self.traces.iter().filter(|t| t.status.is_rejected()).count()
    }
}

/// One stream and one set of initial values, shared by every algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRun {
    pub run: usize,
    pub data_seed: u64,
    pub init_seed: u64,
    pub initial: ParameterState,
    pub algorithms: Vec<AlgorithmRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchReport {
    pub config: ExperimentConfig,
    pub truth: ParameterState,
    pub runs: Vec<SynthRun>,
}

impl SynthBenchReport {
    /// Median final relative error per algorithm across runs.
    pub fn median_final_errors(&self) -> BTreeMap<Algorithm, f64> {
        let mut per_alg: BTreeMap<Algorithm, Vec<f64>> = BTreeMap::new();
        for run in &self.runs {
            for alg in &run.algorithms {
                per_alg.entry(alg.algorithm).or_default().push(alg.final_error());
            }
        }
        per_alg
            .into_iter()
            .map(|(alg, errs)| (alg, quartiles(&errs).median))
            .collect()
    }
}

fn single_run(config: &ExperimentConfig, truth: &ParameterState, run: usize) -> Result<SynthRun> {
    let data_seed = derive_seed(config.master_seed, run as u64, DATA_STREAM);
    let init_seed = derive_seed(config.master_seed, run as u64, INIT_STREAM);
    let observations = gen_complex_exponential(&config.synth.spec(data_seed))?;
    let initial = sample_initial_values(&config.init, init_seed)?;
    let algorithms = config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let est = config.estimator_for(algorithm);
            let traces = run_stream(
                &ComplexExponential3,
                &est,
                &initial,
                &observations,
                Some(truth),
            )?;
            Ok(AlgorithmRun { algorithm, traces })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthRun {
        run,
        data_seed,
        init_seed,
        initial,
        algorithms,
    })
}

fn all_runs(config: &ExperimentConfig) -> Result<(ParameterState, Vec<SynthRun>)> {
    config.validate()?;
    let truth = ParameterState::from_slices(&config.synth.true_a, &config.synth.true_c)?;
    // Ordered collect keeps results independent of scheduling.
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|run| single_run(config, &truth, run))
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, runs))
}

/// Runs the synthetic benchmark without touching the filesystem.
pub fn synth_bench(config: &ExperimentConfig) -> Result<SynthBenchReport> {
    let (truth, runs) = all_runs(config)?;
    Ok(SynthBenchReport {
        config: config.clone(),
        truth,
        runs,
    })
}

/// [`synth_bench`] plus trace and summary files in `config.output_dir`.
pub fn run_synth_bench(config: &ExperimentConfig) -> Result<SynthBenchReport> {
    let report = synth_bench(config)?;
    super::write_synth_bench(&report)?;
    Ok(report)
}

/// Single-run benchmark; returns the report and the parameter table text.
pub fn run_compare(config: &ExperimentConfig) -> Result<(SynthBenchReport, String)> {
    let mut single = config.clone();
    single.runs = 1;
    let report = run_synth_bench(&single)?;
    let table = super::output::checkpoint_table(&report);
    Ok((report, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub run: usize,
    pub algorithm: Algorithm,
    pub final_error: f64,
    pub rejected_steps: usize,
    pub diverged: bool,
}

/// Five-number summary plus mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl Quartiles {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quartiles with linear interpolation between order statistics; non-finite
/// entries sort last.
pub fn quartiles(values: &[f64]) -> Quartiles {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Quartiles {
        min: q(0.0),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: q(1.0),
        mean,
        std,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub config: ExperimentConfig,
    /// Sorted by run, then by the configured algorithm order.
    pub rows: Vec<McRow>,
    pub summary: Vec<(Algorithm, Quartiles)>,
}

impl MonteCarloReport {
    pub fn summary_for(&self, algorithm: Algorithm) -> Option<&Quartiles> {
        self.summary
            .iter()
            .find(|(a, _)| *a == algorithm)
            .map(|(_, q)| q)
    }
}

/// Monte-Carlo robustness study: fresh initial values and a fresh stream
/// per run, shared across algorithms within the run.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    let (_, runs) = all_runs(config)?;
    let mut rows = Vec::with_capacity(runs.len() * config.algorithms.len());
    for run in &runs {
        for alg in &run.algorithms {
            let final_error = alg.final_error();
            let rejected_steps = alg.rejected_steps();
            rows.push(McRow {
                run: run.run,
                algorithm: alg.algorithm,
                final_error,
                rejected_steps,
                diverged: rejected_steps > 0 || !final_error.is_finite(),
            });
        }
    }
    let summary = config
        .algorithms
        .iter()
        .map(|&alg| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| r.final_error)
                .collect();
            (alg, quartiles(&errs))
        })
        .collect();
    Ok(MonteCarloReport {
        config: config.clone(),
        rows,
        summary,
    })
}

pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    let report = monte_carlo(config)?;
    super::write_monte_carlo(&report)?;
    Ok(report)
}
