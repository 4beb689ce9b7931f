use nalgebra::{DMatrix, DVector};

use super::{rls_update, Algorithm, RecursiveState, RvpWindow, StepStatus, StepTrace};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, EquilibratedSvd};
use crate::model::{
    basis, basis_jacobian, gradient_extended, Observation, ParameterState, SeparableModel,
};

/// Why a step did not complete. Dimension and configuration problems are
/// fatal; numeric blow-ups only reject the step.
enum Failure {
    Fatal(Error),
    Rejected { substep: Option<u8>, reason: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } | Error::Singular { .. } => Failure::Rejected {
                substep: None,
                reason: e.to_string(),
            },
            other => Failure::Fatal(other),
        }
    }
}

trait AtSubstep<T> {
    fn at(self, substep: u8) -> std::result::Result<T, Failure>;
}

impl<T> AtSubstep<T> for Result<T> {
    fn at(self, substep: u8) -> std::result::Result<T, Failure> {
        self.map_err(|e| match Failure::from(e) {
            Failure::Rejected { reason, .. } => Failure::Rejected {
                substep: Some(substep),
                reason,
            },
            fatal => fatal,
        })
    }
}

fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite { what, index }),
    }
}

/// `S ← S − (Sg)(Sg)ᵀ/α`, `α = 1 + gᵀSg`. Returns the new matrix and `α`.
fn covariance_downdate(s: &DMatrix<f64>, g: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sg = s * g;
    let alpha = 1.0 + g.dot(&sg);
    if !alpha.is_finite() {
        return Err(Error::NonFinite {
            what: "covariance normalizer",
            index: 0,
        });
    }
    let mut next = s - &sg * sg.transpose() / alpha;
    symmetrize(&mut next);
    ensure_finite("covariance", next.as_slice())?;
    Ok((next, alpha))
}

struct Outcome {
    state: RecursiveState,
    alpha: Option<f64>,
    status: StepStatus,
}

/// A-priori prediction at the incoming parameters; `NaN` when the basis
/// cannot be evaluated there.
fn prior_prediction(model: &dyn SeparableModel, state: &RecursiveState, obs: &Observation) -> f64 {
    basis(model, state.theta.a.as_slice(), &obs.x)
        .map(|phi| phi.dot(&state.theta.c))
        .unwrap_or(f64::NAN)
}

fn finish(
    algorithm: Algorithm,
    model: &dyn SeparableModel,
    state: &RecursiveState,
    obs: &Observation,
    result: std::result::Result<Outcome, Failure>,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    let prediction = prior_prediction(model, state, obs);
    let outcome = match result {
        Ok(outcome) => {
            let finite = outcome.state.theta.is_finite()
                && outcome.state.s.iter().all(|v| v.is_finite())
                && outcome.state.k.iter().all(|v| v.is_finite());
            if finite {
                outcome
            } else {
                Outcome {
                    state: state.clone(),
                    alpha: None,
                    status: StepStatus::Rejected {
                        substep: None,
                        reason: "non-finite parameter or covariance update".into(),
                    },
                }
            }
        }
        Err(Failure::Fatal(e)) => return Err(e),
        Err(Failure::Rejected { substep, reason }) => Outcome {
            state: state.clone(),
            alpha: None,
            status: StepStatus::Rejected { substep, reason },
        },
    };
    if let StepStatus::Rejected { substep, reason } = &outcome.status {
        log::debug!("{algorithm} step {} rejected (substep {substep:?}): {reason}", state.t + 1);
    }
    let trace = StepTrace {
        t: state.t + 1,
        algorithm,
        prediction,
        residual_before: obs.y - prediction,
        theta_after: outcome.state.theta.clone(),
        alpha: outcome.alpha,
        status: outcome.status,
        rel_error: None,
        cum_fit_error: None,
    };
    Ok((outcome.state, trace))
}

fn check_obs(model: &dyn SeparableModel, obs: &Observation) -> Result<()> {
    crate::error::check_len("state vector", model.state_dim(), obs.x.len())?;
    if obs.y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "observation target",
            index: 0,
        })
    }
}

/// Full gradient of `v = y − φ(a)ᵀc` plus `v` itself.
fn full_gradient_and_residual(
    model: &dyn SeparableModel,
    a: &DVector<f64>,
    c: &DVector<f64>,
    obs: &Observation,
) -> Result<(DVector<f64>, f64)> {
    let phi = basis(model, a.as_slice(), &obs.x)?;
    let jac = basis_jacobian(model, a.as_slice(), &obs.x)?;
    let k = a.len();
    let mut g = DVector::zeros(k + c.len());
    g.rows_mut(0, k).copy_from(&(-(jac.tr_mul(c))));
    g.rows_mut(k, c.len()).copy_from(&(-&phi));
    Ok((g, obs.y - phi.dot(c)))
}

/// Recursive Gauss–Newton over the joint vector `θ = (a, c)`:
/// `S_t = S − Sggᵀ S/α`, `θ_t = θ − S_t g v`, both at `θ^{(t−1)}`.
/// `K` is left untouched.
pub fn rgn_step(
    model: &dyn SeparableModel,
    state: &RecursiveState,
    obs: &Observation,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    check_obs(model, obs)?;
    let result = (|| -> std::result::Result<Outcome, Failure> {
        let theta = &state.theta;
        let (g, v) = full_gradient_and_residual(model, &theta.a, &theta.c, obs)?;
        let (s, alpha) = covariance_downdate(&state.s, &g)?;
        let update = &s * &g * v;
        let next = theta.theta() - update;
        let theta = ParameterState::from_theta(&next, theta.k())?;
        Ok(Outcome {
            state: RecursiveState {
                theta,
                s,
                k: state.k.clone(),
                t: state.t + 1,
            },
            alpha: Some(alpha),
            status: StepStatus::Accepted,
        })
    })();
    finish(Algorithm::Rgn, model, state, obs, result)
}

/// Embedded-point-iteration recursive step.
///
/// 1. Pre-eliminate the coefficients: `c̃ = c + p̃·v(a, c)` with the RLS gain
///    at `φ(a^{(t−1)})`; `K` is not committed.
/// 2. Covariance downdate with the full gradient at `(a^{(t−1)}, c̃)`, then
///    the parameter update `θ − S_t g̃ v(a^{(t−1)}, c̃)` with the extended
///    gradient `g̃` (zero linear block). Only the nonlinear block of the
///    result is kept.
/// 3. RLS update of `c^{(t−1)}` at the new basis `φ(a^{(t)})`, committing `K`.
pub fn repi_step(
    model: &dyn SeparableModel,
    state: &RecursiveState,
    obs: &Observation,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    check_obs(model, obs)?;
    let result = (|| -> std::result::Result<Outcome, Failure> {
        let a_prev = &state.theta.a;
        let c_prev = &state.theta.c;
        let k = a_prev.len();

        // step 1
        let phi_prev = basis(model, a_prev.as_slice(), &obs.x).at(1)?;
        let v_prev = obs.y - phi_prev.dot(c_prev);
        let c_tilde = rls_update(c_prev, &state.k, &phi_prev, v_prev, false)
            .at(1)?
            .c;
        ensure_finite("pre-eliminated coefficients", c_tilde.as_slice()).at(1)?;

        // step 2
        let (g_full, v_tilde) =
            full_gradient_and_residual(model, a_prev, &c_tilde, obs).at(2)?;
        let g_ext = gradient_extended(model, a_prev, &c_tilde, obs).at(2)?;
        let (s, alpha) = covariance_downdate(&state.s, &g_full).at(2)?;
        let direction = &s * &g_ext * v_tilde;
        let a_next = a_prev - direction.rows(0, k);
        ensure_finite("nonlinear parameters", a_next.as_slice()).at(2)?;

        // step 3
        let phi_next = basis(model, a_next.as_slice(), &obs.x).at(3)?;
        let v_next = obs.y - phi_next.dot(c_prev);
        let rls = rls_update(c_prev, &state.k, &phi_next, v_next, true).at(3)?;
        ensure_finite("coefficients", rls.c.as_slice()).at(3)?;
        let k_next = rls.k.expect("committed update returns K");

        Ok(Outcome {
            state: RecursiveState {
                theta: ParameterState {
                    a: a_next,
                    c: rls.c,
                },
                s,
                k: k_next,
                t: state.t + 1,
            },
            alpha: Some(alpha),
            status: StepStatus::Accepted,
        })
    })();
    finish(Algorithm::Repi, model, state, obs, result)
}

/// Recursive GN on `a` alone with the leading `k × k` block of `S`;
/// the rest of `S` is carried along unchanged.
fn nonlinear_block_update(
    s_full: &DMatrix<f64>,
    a: &DVector<f64>,
    g_a: &DVector<f64>,
    v: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let k = a.len();
    let block = s_full.view((0, 0), (k, k)).into_owned();
    let (block, alpha) = covariance_downdate(&block, g_a)?;
    let a_next = a - &block * g_a * v;
    let mut s = s_full.clone();
    s.view_mut((0, 0), (k, k)).copy_from(&block);
    Ok((s, a_next, alpha))
}

/// Alternating baseline: RLS on `c` at `a^{(t−1)}` (committing `K`), then a
/// recursive GN step on `a` with the nonlinear gradient block at the new `c`.
pub fn hrgn_step(
    model: &dyn SeparableModel,
    state: &RecursiveState,
    obs: &Observation,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    check_obs(model, obs)?;
    let result = (|| -> std::result::Result<Outcome, Failure> {
        let a = &state.theta.a;
        let phi = basis(model, a.as_slice(), &obs.x)?;
        let v = obs.y - phi.dot(&state.theta.c);
        let rls = rls_update(&state.theta.c, &state.k, &phi, v, true)?;
        let c = rls.c;
        let jac = basis_jacobian(model, a.as_slice(), &obs.x)?;
        let g_a = -(jac.tr_mul(&c));
        let v_after = obs.y - phi.dot(&c);
        let (s, a_next, alpha) = nonlinear_block_update(&state.s, a, &g_a, v_after)?;
        Ok(Outcome {
            state: RecursiveState {
                theta: ParameterState { a: a_next, c },
                s,
                k: rls.k.expect("committed update returns K"),
                t: state.t + 1,
            },
            alpha: Some(alpha),
            status: StepStatus::Accepted,
        })
    })();
    finish(Algorithm::Hrgn, model, state, obs, result)
}

/// Recursive variable projection over a sliding window.
///
/// The observation joins the window first. While the window holds fewer
/// than `n` records (or its design matrix is rank deficient) the parameters
/// stay frozen. Otherwise `c` is the least-squares fit on the window at
/// `a^{(t−1)}` and `a` takes a recursive GN step along the newest row of the
/// window's Kaufman Jacobian `−P⊥·DΦ·c`.
pub fn rvp_step(
    model: &dyn SeparableModel,
    state: &RecursiveState,
    window: &mut RvpWindow,
    obs: &Observation,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    check_obs(model, obs)?;
    window.push(obs.clone());
    let n = state.linear_dim();
    let frozen = |reason: String| Outcome {
        state: RecursiveState {
            t: state.t + 1,
            ..state.clone()
        },
        alpha: None,
        status: StepStatus::Frozen { reason },
    };
    let result = (|| -> std::result::Result<Outcome, Failure> {
        if window.len() < n {
            return Ok(frozen(format!(
                "window holds {} of {n} required observations",
                window.len()
            )));
        }
        let a = &state.theta.a;
        let k = a.len();
        let rows = window.len();
        let mut phi = DMatrix::zeros(rows, n);
        let mut y = DVector::zeros(rows);
        let mut jacobians = Vec::with_capacity(rows);
        for (i, o) in window.iter().enumerate() {
            phi.row_mut(i)
                .copy_from(&basis(model, a.as_slice(), &o.x)?.transpose());
            y[i] = o.y;
            jacobians.push(basis_jacobian(model, a.as_slice(), &o.x)?);
        }
        let svd = match EquilibratedSvd::new(&phi) {
            Ok(svd) => svd,
            Err(Error::Singular { condition }) => {
                return Ok(frozen(format!(
                    "window design matrix is rank deficient (condition {condition:e})"
                )))
            }
            Err(e) => return Err(e.into()),
        };
        let c = svd.solve(&y);
        let mut dphi_c = DVector::zeros(rows);
        let mut kaufman_last = DVector::zeros(k);
        for l in 0..k {
            for (i, jac) in jacobians.iter().enumerate() {
                dphi_c[i] = jac.column(l).dot(&c);
            }
            kaufman_last[l] = -svd.project_complement(&dphi_c)[rows - 1];
        }
        let v = y[rows - 1] - phi.row(rows - 1).transpose().dot(&c);
        let (s, a_next, alpha) = nonlinear_block_update(&state.s, a, &kaufman_last, v)?;
        Ok(Outcome {
            state: RecursiveState {
                theta: ParameterState { a: a_next, c },
                s,
                k: state.k.clone(),
                t: state.t + 1,
            },
            alpha: Some(alpha),
            status: StepStatus::Accepted,
        })
    })();
    finish(Algorithm::Rvp, model, state, obs, result)
}

/// `θ ← θ − η·g·v` with the full gradient; covariances untouched.
pub fn sgd_step(
    model: &dyn SeparableModel,
    state: &RecursiveState,
    obs: &Observation,
    learning_rate: f64,
) -> Result<(RecursiveState, StepTrace)> {
    state.check_against(model)?;
    check_obs(model, obs)?;
    let result = (|| -> std::result::Result<Outcome, Failure> {
        let theta = &state.theta;
        let (g, v) = full_gradient_and_residual(model, &theta.a, &theta.c, obs)?;
        let next = theta.theta() - g * (learning_rate * v);
        Ok(Outcome {
            state: RecursiveState {
                theta: ParameterState::from_theta(&next, theta.k())?,
                t: state.t + 1,
                ..state.clone()
            },
            alpha: None,
            status: StepStatus::Accepted,
        })
    })();
    finish(Algorithm::Sgd, model, state, obs, result)
}
