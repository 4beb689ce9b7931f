use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentConfig, FitSeriesReport, MonteCarloReport, SynthBenchReport};
use crate::error::{Error, Result};
use crate::recursive::StepTrace;

pub const TRACE_HEADER: &str = "t,algorithm,residual,rel_error,cum_fit_error";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn config_preamble(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    for line in config.to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

fn write_file(path: &Path, config: &ExperimentConfig, body: &str) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(config_preamble(config).as_bytes())
        .and_then(|_| file.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn output_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn trace_rows(out: &mut String, traces: &[StepTrace]) {
    for tr in traces {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            tr.t,
            tr.algorithm,
            tr.residual_before,
            opt(tr.rel_error),
            opt(tr.cum_fit_error)
        );
    }
}

fn param_header(out: &mut String, k: usize, n: usize) {
    for i in 1..=k {
        let _ = write!(out, ",a{i}");
    }
    for j in 1..=n {
        let _ = write!(out, ",c{j}");
    }
}

/// `trace_run{NNN}.csv` per run and a `summary.csv` with the parameter
/// estimates at every checkpoint. Returns the written paths.
pub fn write_synth_bench(report: &SynthBenchReport) -> Result<Vec<PathBuf>> {
    let config = &report.config;
    let dir = output_dir(config)?;
    let mut paths = Vec::new();
    for run in &report.runs {
        let mut body = format!("{TRACE_HEADER}\n");
        for alg in &run.algorithms {
            trace_rows(&mut body, &alg.traces);
        }
        let path = dir.join(format!("trace_run{:03}.csv", run.run));
        write_file(&path, config, &body)?;
        paths.push(path);
    }

    let mut body = String::from("run,seed,algorithm,t");
    param_header(&mut body, report.truth.k(), report.truth.n());
    body.push_str(",rel_error\n");
    for run in &report.runs {
        for alg in &run.algorithms {
            for &cp in &config.checkpoints {
                let Some(tr) = alg.traces.get(cp - 1) else { continue };
                let _ = write!(body, "{},{},{},{}", run.run, run.data_seed, alg.algorithm, cp);
                for v in tr.theta_after.a.iter().chain(tr.theta_after.c.iter()) {
                    let _ = write!(body, ",{v}");
                }
                let _ = writeln!(body, ",{}", opt(tr.rel_error));
            }
        }
    }
    let path = dir.join("summary.csv");
    write_file(&path, config, &body)?;
    paths.push(path);
    Ok(paths)
}

/// Parameter-table text for the first run: one block per checkpoint, one
/// row per algorithm, truth in the last row.
pub(crate) fn checkpoint_table(report: &SynthBenchReport) -> String {
    let mut out = String::new();
    let Some(run) = report.runs.first() else { return out };
    let (k, n) = (report.truth.k(), report.truth.n());
    let mut header = format!("{:>6} {:>6}", "alg", "t");
    for j in 1..=n {
        let _ = write!(header, " {:>8}", format!("c{j}"));
    }
    for i in 1..=k {
        let _ = write!(header, " {:>8}", format!("a{i}"));
    }
    let _ = writeln!(header, " {:>9}", "err(%)");
    out.push_str(&header);
    let row = |out: &mut String, name: &str, t: &str, a: &[f64], c: &[f64], err: Option<f64>| {
        let _ = write!(out, "{name:>6} {t:>6}");
        for v in c {
            let _ = write!(out, " {v:>8.4}");
        }
        for v in a {
            let _ = write!(out, " {v:>8.4}");
        }
        let _ = writeln!(out, " {:>9}", err.map_or_else(|| "-".into(), |e| format!("{:.2}", 100.0 * e)));
    };
    for &cp in &report.config.checkpoints {
        for alg in &run.algorithms {
            if let Some(tr) = alg.traces.get(cp - 1) {
                row(
                    &mut out,
                    alg.algorithm.name(),
                    &cp.to_string(),
                    tr.theta_after.a.as_slice(),
                    tr.theta_after.c.as_slice(),
                    tr.rel_error,
                );
            }
        }
    }
    row(
        &mut out,
        "true",
        "",
        report.truth.a.as_slice(),
        report.truth.c.as_slice(),
        None,
    );
    out
}

/// `summary.csv` with one row per run and algorithm, `quartiles.csv` with
/// one row per algorithm.
pub fn write_monte_carlo(report: &MonteCarloReport) -> Result<Vec<PathBuf>> {
    let config = &report.config;
    let dir = output_dir(config)?;
    let mut body = String::from("run,algorithm,final_error,rejected_steps,diverged\n");
    for r in &report.rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            r.run, r.algorithm, r.final_error, r.rejected_steps, r.diverged
        );
    }
    let summary = dir.join("summary.csv");
    write_file(&summary, config, &body)?;

    let mut body = String::from("algorithm,min,q1,median,q3,max,mean,std\n");
    for (alg, q) in &report.summary {
        let _ = writeln!(
            body,
            "{alg},{},{},{},{},{},{},{}",
            q.min, q.q1, q.median, q.q3, q.max, q.mean, q.std
        );
    }
    let quartiles = dir.join("quartiles.csv");
    write_file(&quartiles, config, &body)?;
    Ok(vec![summary, quartiles])
}

/// `trace.csv` with the training-stream traces and `summary.csv` with the
/// holdout errors.
pub fn write_fit_series(report: &FitSeriesReport) -> Result<Vec<PathBuf>> {
    let config = &report.config;
    let dir = output_dir(config)?;
    let mut body = format!("{TRACE_HEADER}\n");
    for fit in &report.fits {
        trace_rows(&mut body, &fit.traces);
    }
    let trace = dir.join("trace.csv");
    write_file(&trace, config, &body)?;

    let mut body = String::from(
        "algorithm,holdout_mse,baseline_mse,final_fit_error,rejected_steps,negative_widths\n",
    );
    for fit in &report.fits {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            fit.algorithm,
            fit.holdout_mse,
            report.baseline_mse,
            fit.final_fit_error,
            fit.rejected_steps,
            fit.negative_widths.len()
        );
    }
    let summary = dir.join("summary.csv");
    write_file(&summary, config, &body)?;
    Ok(vec![trace, summary])
}
