//! Separable nonlinear regression models `f(a, c; x) = Σ c_j φ_j(a; x)`.
//!
//! A model supplies the basis vector `φ(a; x)` (length `n`) and its Jacobian
//! with respect to the nonlinear parameters (`n × k`). Everything the
//! estimators need (predictions, residuals, the joint gradient and the
//! extended gradient with a zeroed linear block) is derived here from those
//! two primitives.

mod complex_exp;
mod linear;
mod rbf_arx;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

pub use complex_exp::ComplexExponential3;
pub use linear::LinearBasis;
pub use rbf_arx::{build_regressors, RbfArx, RbfArxSpec};

/// Model-family identifier plus structural orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelDescriptor {
    ComplexExponential3,
    RbfArx(RbfArxSpec),
    Linear { n: usize },
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelDescriptor::ComplexExponential3 => write!(f, "complex-exponential-3"),
            ModelDescriptor::RbfArx(s) => write!(
                f,
                "rbf-arx(p={},q={},m={},d={},inputs={},dl={})",
                s.p, s.q, s.m, s.d, s.input_dim, s.dl
            ),
            ModelDescriptor::Linear { n } => write!(f, "linear(n={n})"),
        }
    }
}

/// A model that is linear in `c` and nonlinear in `a`.
///
/// Implementations write into caller-provided buffers and may assume the
/// lengths were already validated; the checked entry points are the free
/// functions [`basis`] and [`basis_jacobian`].
pub trait SeparableModel: Send + Sync + fmt::Debug {
    /// Number of nonlinear parameters `k`.
    fn nonlinear_dim(&self) -> usize;
    /// Number of linear parameters (basis functions) `n`.
    fn linear_dim(&self) -> usize;
    /// Length of the explanatory vector `x`.
    fn state_dim(&self) -> usize;
    fn descriptor(&self) -> ModelDescriptor;

    fn eval_basis(&self, a: &[f64], x: &[f64], out: &mut [f64]);

    /// Fills `out` (`n × k`) with `∂φ_j/∂a_i` at row `j`, column `i`.
    fn eval_basis_jacobian(&self, a: &[f64], x: &[f64], out: &mut DMatrix<f64>);
}

/// Partitioned parameter vector `θ = (a, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub a: DVector<f64>,
    pub c: DVector<f64>,
}

impl ParameterState {
    /// `a` may be empty (purely linear fixtures); `c` may not.
    pub fn new(a: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one linear parameter is required".into(),
            ));
        }
        check_finite("nonlinear parameters", a.as_slice())?;
        check_finite("linear parameters", c.as_slice())?;
        Ok(Self { a, c })
    }

    pub fn from_slices(a: &[f64], c: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(a), DVector::from_column_slice(c))
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Concatenation `(a, c)`.
    pub fn theta(&self) -> DVector<f64> {
        let mut theta = DVector::zeros(self.k() + self.n());
        theta.rows_mut(0, self.k()).copy_from(&self.a);
        theta.rows_mut(self.k(), self.n()).copy_from(&self.c);
        theta
    }

    /// Splits `theta` after its first `k` entries.
    pub fn from_theta(theta: &DVector<f64>, k: usize) -> Result<Self> {
        if k >= theta.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector (k must be below its length)",
                expected: k + 1,
                actual: theta.len(),
            });
        }
        Self::new(
            theta.rows(0, k).into_owned(),
            theta.rows(k, theta.len() - k).into_owned(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.c.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn check_against(&self, model: &dyn SeparableModel) -> Result<()> {
        check_len("nonlinear parameters", model.nonlinear_dim(), self.k())?;
        check_len("linear parameters", model.linear_dim(), self.n())
    }
}

/// One time-step record.
///
/// `x` is the model's explanatory vector. For RBF-AR(X) models it packs the
/// state vector, the autoregressive lags and the exogenous lags; see
/// [`RbfArxSpec::state_of`] and friends for the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: i64,
    pub y: f64,
    pub x: Vec<f64>,
}

impl Observation {
    pub fn new(t: i64, y: f64, x: Vec<f64>) -> Self {
        Self { t, y, x }
    }
}

fn check_inputs(model: &dyn SeparableModel, a: &[f64], x: &[f64]) -> Result<()> {
    check_len("nonlinear parameters", model.nonlinear_dim(), a.len())?;
    check_len("state vector", model.state_dim(), x.len())?;
    check_finite("nonlinear parameters", a)?;
    check_finite("state vector", x)
}

/// `φ(a; x)`, validated.
pub fn basis(model: &dyn SeparableModel, a: &[f64], x: &[f64]) -> Result<DVector<f64>> {
    check_inputs(model, a, x)?;
    let mut out = DVector::zeros(model.linear_dim());
    model.eval_basis(a, x, out.as_mut_slice());
    check_finite("basis output", out.as_slice())?;
    Ok(out)
}

/// `∂φ/∂a` as an `n × k` matrix, validated.
pub fn basis_jacobian(model: &dyn SeparableModel, a: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    check_inputs(model, a, x)?;
    let mut out = DMatrix::zeros(model.linear_dim(), model.nonlinear_dim());
    model.eval_basis_jacobian(a, x, &mut out);
    check_finite("basis jacobian", out.as_slice())?;
    Ok(out)
}

pub fn predict(model: &dyn SeparableModel, state: &ParameterState, x: &[f64]) -> Result<f64> {
    state.check_against(model)?;
    let phi = basis(model, state.a.as_slice(), x)?;
    Ok(phi.dot(&state.c))
}

/// `v = y − f(a, c; x)`.
pub fn residual(model: &dyn SeparableModel, state: &ParameterState, obs: &Observation) -> Result<f64> {
    Ok(obs.y - predict(model, state, &obs.x)?)
}

/// Gradient of the residual with respect to `θ = (a, c)`:
/// nonlinear block `−(∂φ/∂a)ᵀ c`, linear block `−φ`.
pub fn gradient_full(
    model: &dyn SeparableModel,
    state: &ParameterState,
    obs: &Observation,
) -> Result<DVector<f64>> {
    state.check_against(model)?;
    let a = state.a.as_slice();
    let phi = basis(model, a, &obs.x)?;
    let jac = basis_jacobian(model, a, &obs.x)?;
    let k = state.k();
    let mut g = DVector::zeros(k + state.n());
    g.rows_mut(0, k).copy_from(&(-(jac.transpose() * &state.c)));
    g.rows_mut(k, state.n()).copy_from(&(-phi));
    Ok(g)
}

/// Same nonlinear block as [`gradient_full`] at `(a, c_tilde)`, with the
/// linear block set to exactly zero.
pub fn gradient_extended(
    model: &dyn SeparableModel,
    a: &DVector<f64>,
    c_tilde: &DVector<f64>,
    obs: &Observation,
) -> Result<DVector<f64>> {
    check_len("linear parameters", model.linear_dim(), c_tilde.len())?;
    let jac = basis_jacobian(model, a.as_slice(), &obs.x)?;
    let k = a.len();
    let mut g = DVector::zeros(k + c_tilde.len());
    g.rows_mut(0, k).copy_from(&(-(jac.transpose() * c_tilde)));
    Ok(g)
}
