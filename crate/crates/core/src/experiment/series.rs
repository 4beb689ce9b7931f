use nalgebra::DVector;

use super::{ExperimentConfig, SeriesSettings, SeriesTransform};
use crate::data::{load_series, ozone_transform, TimeSeries};
use crate::error::{check_len, Error, Result};
use crate::metrics::prediction_accuracy;
use crate::model::{build_regressors, Observation, ParameterState, RbfArx, RbfArxSpec};
use crate::recursive::{run_stream, Algorithm, StepTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFit {
    pub algorithm: Algorithm,
    pub final_state: ParameterState,
    pub holdout_mse: f64,
    /// Cumulative one-step fit error over the training stream.
    pub final_fit_error: f64,
    pub rejected_steps: usize,
    /// Kernels whose width ended negative (the kernel then grows away from
    /// its center).
    pub negative_widths: Vec<usize>,
    pub traces: Vec<StepTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSeriesReport {
    pub config: ExperimentConfig,
    pub initial: ParameterState,
    pub train_len: usize,
    pub holdout_len: usize,
    /// Holdout MSE of predicting the training-target mean.
    pub baseline_mse: f64,
    pub fits: Vec<SeriesFit>,
}

impl FitSeriesReport {
    pub fn fit_for(&self, algorithm: Algorithm) -> Option<&SeriesFit> {
        self.fits.iter().find(|f| f.algorithm == algorithm)
    }
}

pub fn constant_mean_mse(train: &[Observation], holdout: &[Observation]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mean = train.iter().map(|o| o.y).sum::<f64>() / train.len() as f64;
    Ok(holdout.iter().map(|o| (o.y - mean).powi(2)).sum::<f64>() / holdout.len() as f64)
}

/// Initial values: configured entries where present, otherwise centers at
/// evenly spaced quantiles of the training targets, widths `1/(d·var)` and
/// zero coefficients.
fn initial_state(
    settings: &SeriesSettings,
    spec: &RbfArxSpec,
    train: &[Observation],
) -> Result<ParameterState> {
    let ys: Vec<f64> = train.iter().map(|o| o.y).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let mut sorted = ys.clone();
    sorted.sort_by(f64::total_cmp);

    let widths = match &settings.init_widths {
        Some(w) => w.clone(),
        None => {
            let w = if var > 0.0 { 1.0 / (spec.d as f64 * var) } else { 1.0 };
            vec![w; spec.m]
        }
    };
    let centers = match &settings.init_centers {
        Some(c) => c.clone(),
        None => (0..spec.m)
            .map(|k| {
                let pos = (k as f64 + 0.5) / spec.m as f64 * (sorted.len() - 1) as f64;
                vec![sorted[pos.round() as usize]; spec.d]
            })
            .collect(),
    };
    let a = spec.pack_nonlinear(&widths, &centers)?;
    let c = match &settings.init_coefficients {
        Some(c) => {
            check_len("initial coefficients", spec.linear_dim(), c.len())?;
            DVector::from_column_slice(c)
        }
        None => DVector::zeros(spec.linear_dim()),
    };
    ParameterState::new(a, c)
}

/// Fits every configured algorithm on the training part of `series` and
/// scores it on the holdout part.
pub fn fit_series(config: &ExperimentConfig, series: &TimeSeries) -> Result<FitSeriesReport> {
    config.validate()?;
    let settings = config
        .series
        .as_ref()
        .expect("validated config has series settings");
    let spec = settings.model;
    let mut series = series.clone();
    if settings.transform == SeriesTransform::Ozone {
        series.y = ozone_transform(&series.y)?;
    }
    let (train, holdout) = build_regressors(&series, &spec, settings.holdout_from)?;
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let baseline_mse = constant_mean_mse(&train, &holdout)?;
    let model = RbfArx::new(spec)?;
    let initial = initial_state(settings, &spec, &train)?;

    let mut fits = Vec::with_capacity(config.algorithms.len());
    for &algorithm in &config.algorithms {
        let est = config.estimator_for(algorithm);
        let traces = run_stream(&model, &est, &initial, &train, None)?;
        let last = traces.last().expect("training stream is non-empty");
        let final_state = last.theta_after.clone();
        let final_fit_error = last.cum_fit_error.unwrap_or(f64::NAN);
        let negative_widths = model.negative_widths(final_state.a.as_slice());
        if !negative_widths.is_empty() {
            log::warn!(
                "{algorithm}: kernel widths {negative_widths:?} ended negative"
            );
        }
        let holdout_mse = prediction_accuracy(&model, &final_state, &holdout)?;
        fits.push(SeriesFit {
            algorithm,
            final_state,
            holdout_mse,
            final_fit_error,
            rejected_steps: traces.iter().filter(|t| t.status.is_rejected()).count(),
            negative_widths,
            traces,
        });
    }
    Ok(FitSeriesReport {
        config: config.clone(),
        initial,
        train_len: train.len(),
        holdout_len: holdout.len(),
        baseline_mse,
        fits,
    })
}

/// Loads the configured series file, fits, and writes `trace.csv` and
/// `summary.csv`.
pub fn run_fit_series(config: &ExperimentConfig) -> Result<FitSeriesReport> {
    config.validate()?;
    let settings = config.series.as_ref().expect("validated");
    let path = settings
        .path
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("fit-series needs a series path".into()))?;
    let series = load_series(path, &settings.schema)?;
    let report = fit_series(config, &series)?;
    super::write_fit_series(&report)?;
    Ok(report)
}
