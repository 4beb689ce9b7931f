//! `repi`: runs the online-estimation benchmarks and writes CSV traces.
//!
//! Settings come from an optional TOML file (`--config`), then flags.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use repi_core::data::SeriesSchema;
use repi_core::experiment::{
    run_compare, run_fit_series, run_monte_carlo, run_synth_bench, ExperimentConfig,
    ExperimentKind, SeriesSettings, SeriesTransform,
};
use repi_core::model::RbfArxSpec;
use repi_core::Algorithm;

#[derive(Parser, Debug)]
#[command(name = "repi", version, about = "Online separable-regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-seed convergence traces on the synthetic complex-exponential stream.
    SynthBench(Common),
    /// Final-error distribution over many random initializations.
    MonteCarlo(Common),
    /// RBF-AR(X) fit on a CSV series with a holdout split.
    FitSeries(SeriesArgs),
    /// One synthetic run printed as a parameter table.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of repi,rgn,hrgn,rvp,sgd.
    #[arg(short, long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    /// Master seed.
    #[arg(short, long)]
    seed: Option<u64>,
    /// Seeds (synth-bench) or runs (monte-carlo).
    #[arg(short, long)]
    runs: Option<usize>,
    #[arg(short, long, env = "REPI_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    /// RVP window length.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[command(flatten)]
    common: Common,
    /// CSV file with columns t,y[,u1,…].
    #[arg(long)]
    series: Option<PathBuf>,
    /// First series position of the holdout set.
    #[arg(long)]
    split: Option<usize>,
    /// Model orders as p,q,m,d.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Apply ln(y − 260) to the target.
    #[arg(long)]
    ozone: bool,
}

fn resolve(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::new(kind),
    };
    cfg.kind = kind;
    if let Some(a) = &args.algorithms {
        cfg.algorithms = a.clone();
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(d) = &args.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(v) = args.s0 {
        cfg.estimator.s0 = v;
    }
    if let Some(v) = args.k0 {
        cfg.estimator.k0 = v;
    }
    if let Some(v) = args.window {
        cfg.estimator.window_p = v;
    }
    Ok(cfg)
}

fn resolve_series(args: &SeriesArgs) -> Result<ExperimentConfig> {
    let mut cfg = resolve(ExperimentKind::FitSeries, &args.common)?;
    if let Some(o) = &args.orders {
        anyhow::ensure!(o.len() == 4, "--orders takes exactly four values p,q,m,d (got {})", o.len());
    }
    let configured = cfg.series.as_ref().map(|s| s.model);
    // exogenous layout comes from the config; a bare --orders with q > 0 means one input
    let orders = args.orders.as_ref().map(|o| RbfArxSpec {
        p: o[0],
        q: o[1],
        m: o[2],
        d: o[3],
        input_dim: match configured {
            Some(c) if c.input_dim > 0 => c.input_dim,
            _ if o[1] > 0 => 1,
            _ => 0,
        },
        dl: configured.map_or(0, |c| c.dl),
    });
    let series = match cfg.series.take() {
        Some(s) => s,
        None => SeriesSettings {
            path: None,
            schema: SeriesSchema::default(),
            transform: SeriesTransform::None,
            model: orders.unwrap_or(RbfArxSpec::ar(2, 1, 1)),
            holdout_from: 0,
            init_widths: None,
            init_centers: None,
            init_coefficients: None,
        },
    };
    let mut series = series;
    if let Some(spec) = orders {
        series.model = spec;
    }
    if let Some(p) = &args.series {
        series.path = Some(p.clone());
    }
    if let Some(s) = args.split {
        series.holdout_from = s;
    }
    if args.ozone {
        series.transform = SeriesTransform::Ozone;
    }
    cfg.series = Some(series);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthBench(args) => {
            let cfg = resolve(ExperimentKind::SynthBench, &args)?;
            let report = run_synth_bench(&cfg)?;
            println!("median final relative error over {} seeds", report.runs.len());
            for (alg, err) in report.median_final_errors() {
                println!("  {alg:>5}  {:.4}%", 100.0 * err);
            }
            println!("traces written to {}", cfg.output_dir.display());
        }
        Command::MonteCarlo(args) => {
            let cfg = resolve(ExperimentKind::MonteCarlo, &args)?;
            let report = run_monte_carlo(&cfg)?;
            println!("{:>5} {:>10} {:>10} {:>10} {:>9}", "alg", "median", "q1", "q3", "diverged");
            for (alg, q) in &report.summary {
                let diverged = report.rows.iter().filter(|r| r.algorithm == *alg && r.diverged).count();
                println!("{alg:>5} {:>10.5} {:>10.5} {:>10.5} {diverged:>9}", q.median, q.q1, q.q3);
            }
            println!("summary written to {}", cfg.output_dir.display());
        }
        Command::FitSeries(args) => {
            let cfg = resolve_series(&args)?;
            let report = run_fit_series(&cfg)?;
            println!(
                "train {} / holdout {}; constant-mean holdout MSE {:.6}",
                report.train_len, report.holdout_len, report.baseline_mse
            );
            for fit in &report.fits {
                println!(
                    "  {:>5}  holdout MSE {:.6}  training fit error {:.6}",
                    fit.algorithm, fit.holdout_mse, fit.final_fit_error
                );
            }
        }
        Command::Compare(args) => {
            let cfg = resolve(ExperimentKind::Compare, &args)?;
            let (_, table) = run_compare(&cfg)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
