//! Evaluation quantities and the persistent-excitation check.
//!
//! "Prediction accuracy" on a holdout set is taken to be the one-step-ahead
//! mean squared error with the true lagged outputs as regressors, the same
//! functional as the cumulative fit error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::eigen_bounds;
use crate::model::{predict, Observation, ParameterState, SeparableModel};

/// `‖θ̂ − θ‖₂ / ‖θ‖₂` over the concatenated `(a, c)` vectors.
pub fn relative_param_error(estimate: &ParameterState, truth: &ParameterState) -> Result<f64> {
    check_len("nonlinear parameters", truth.k(), estimate.k())?;
    check_len("linear parameters", truth.n(), estimate.n())?;
    let reference = truth.theta();
    let norm = reference.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative error against an all-zero parameter vector",
        ));
    }
    Ok((estimate.theta() - reference).norm() / norm)
}

/// `(1/t) Σ_{i<t} (ŷ_i − y_i)²` over the first `t` entries.
pub fn cumulative_fit_error(predictions: &[f64], targets: &[f64], t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::UndefinedMetric("cumulative fit error over zero samples"));
    }
    if predictions.len() < t || targets.len() < t {
        return Err(Error::DimensionMismatch {
            what: "fit error inputs",
            expected: t,
            actual: predictions.len().min(targets.len()),
        });
    }
    let sum: f64 = predictions[..t]
        .iter()
        .zip(&targets[..t])
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(sum / t as f64)
}

/// Holdout one-step-ahead mean squared error.
pub fn prediction_accuracy(
    model: &dyn SeparableModel,
    state: &ParameterState,
    holdout: &[Observation],
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let predictions = holdout
        .iter()
        .map(|o| predict(model, state, &o.x))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = holdout.iter().map(|o| o.y).collect();
    cumulative_fit_error(&predictions, &targets, holdout.len())
}

/// Outcome of [`pe_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub is_pe: bool,
    /// Smallest eigenvalue over all windows.
    pub beta: f64,
    /// Largest eigenvalue over all windows.
    pub gamma: f64,
    pub window: usize,
}

pub const PE_TOLERANCE: f64 = 1e-10;

/// Bounds the spectrum of `(1/N) Σ φφᵀ` over every length-`N` window.
pub fn pe_check(vectors: &[DVector<f64>], window: usize) -> Result<PeReport> {
    let dim = vectors.first().map_or(0, |v| v.len());
    if dim == 0 {
        return Err(Error::InvalidConfig("no information vectors".into()));
    }
    if window < dim {
        return Err(Error::InvalidConfig(format!(
            "window {window} is shorter than the vector dimension {dim}"
        )));
    }
    if vectors.len() < window {
        return Err(Error::InvalidConfig(format!(
            "sequence of {} vectors is shorter than the window {window}",
            vectors.len()
        )));
    }
    for v in vectors {
        check_len("information vector", dim, v.len())?;
    }

    // Sliding sum of outer products.
    let mut acc = DMatrix::zeros(dim, dim);
    for v in &vectors[..window] {
        acc += v * v.transpose();
    }
    let scale = 1.0 / window as f64;
    let (mut beta, mut gamma) = eigen_bounds(&(&acc * scale));
    for start in 1..=(vectors.len() - window) {
        let leaving = &vectors[start - 1];
        let entering = &vectors[start + window - 1];
        acc -= leaving * leaving.transpose();
        acc += entering * entering.transpose();
        let (lo, hi) = eigen_bounds(&(&acc * scale));
        beta = beta.min(lo);
        gamma = gamma.max(hi);
    }
    // Exact-zero windows come back as tiny negative eigenvalues.
    if beta.abs() < PE_TOLERANCE {
        beta = beta.max(0.0);
    }
    Ok(PeReport {
        is_pe: beta > PE_TOLERANCE && gamma.is_finite(),
        beta,
        gamma,
        window,
    })
}
