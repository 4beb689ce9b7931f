//! Online estimators sharing one covariance state.
//!
//! Every estimator consumes one [`Observation`] at a time and produces a new
//! [`RecursiveState`] plus a [`StepTrace`]. A step whose numerics turn
//! non-finite is rejected: the state is left as it was and the trace records
//! why, so a stream never aborts half way.

mod steps;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::symmetrize;
use crate::metrics::relative_param_error;
use crate::model::{Observation, ParameterState, SeparableModel};

pub use steps::{hrgn_step, repi_step, rgn_step, rvp_step, sgd_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Repi,
    Rgn,
    Hrgn,
    Rvp,
    Sgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Repi,
        Algorithm::Rgn,
        Algorithm::Hrgn,
        Algorithm::Rvp,
        Algorithm::Sgd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Repi => "repi",
            Algorithm::Rgn => "rgn",
            Algorithm::Hrgn => "hrgn",
            Algorithm::Rvp => "rvp",
            Algorithm::Sgd => "sgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    /// Initial full covariance `S₀ = s0·I`.
    pub s0: f64,
    /// Initial linear covariance `K₀ = k0·I`.
    pub k0: f64,
    /// RVP window length; `usize::MAX` keeps every observation.
    pub window_p: usize,
    /// SGD step size.
    pub learning_rate: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Repi,
            s0: 1.0,
            k0: 100.0,
            window_p: 10,
            learning_rate: 0.01,
        }
    }
}

impl EstimatorConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.s0) || !positive(self.k0) {
            return Err(Error::InvalidConfig(format!(
                "initial covariance scales must be positive (s0={}, k0={})",
                self.s0, self.k0
            )));
        }
        if self.algorithm == Algorithm::Rvp && self.window_p < n {
            return Err(Error::InvalidConfig(format!(
                "RVP window {} is shorter than the {n} linear parameters",
                self.window_p
            )));
        }
        if self.algorithm == Algorithm::Sgd && !positive(self.learning_rate) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Parameter estimate plus the two covariance recursions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursiveState {
    pub theta: ParameterState,
    /// Full `(k+n) × (k+n)` covariance.
    pub s: DMatrix<f64>,
    /// Linear-parameter `n × n` covariance.
    pub k: DMatrix<f64>,
    /// Accepted observations so far.
    pub t: u64,
}

impl RecursiveState {
    pub fn new(theta: ParameterState, s0: f64, k0: f64) -> Self {
        let dim = theta.k() + theta.n();
        let n = theta.n();
        Self {
            theta,
            s: DMatrix::identity(dim, dim) * s0,
            k: DMatrix::identity(n, n) * k0,
            t: 0,
        }
    }

    pub fn nonlinear_dim(&self) -> usize {
        self.theta.k()
    }

    pub fn linear_dim(&self) -> usize {
        self.theta.n()
    }

    pub(crate) fn check_against(&self, model: &dyn SeparableModel) -> Result<()> {
        self.theta.check_against(model)?;
        let dim = self.theta.k() + self.theta.n();
        check_len("full covariance rows", dim, self.s.nrows())?;
        check_len("full covariance columns", dim, self.s.ncols())?;
        check_len("linear covariance rows", self.theta.n(), self.k.nrows())?;
        check_len("linear covariance columns", self.theta.n(), self.k.ncols())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepStatus {
    Accepted,
    /// Observation absorbed without moving the parameters.
    Frozen { reason: String },
    /// Numerics failed; state left unchanged. `substep` is 1–3 for REPI.
    Rejected { substep: Option<u8>, reason: String },
}

impl StepStatus {
    pub fn is_rejected(&self) -> bool {
        matches!(self, StepStatus::Rejected { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            StepStatus::Accepted => "ok",
            StepStatus::Frozen { .. } => "frozen",
            StepStatus::Rejected { .. } => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// 1-based position of the observation in the stream.
    pub t: u64,
    pub algorithm: Algorithm,
    /// A-priori prediction `f(θ^{(t−1)}; x_t)`.
    pub prediction: f64,
    /// `y_t − prediction`.
    pub residual_before: f64,
    pub theta_after: ParameterState,
    /// `1 + gᵀSg` of the covariance update, when the algorithm has one.
    pub alpha: Option<f64>,
    pub status: StepStatus,
    /// Filled in by [`run_stream`] when the true parameters are known.
    pub rel_error: Option<f64>,
    /// Running mean of squared a-priori residuals, filled in by [`run_stream`].
    pub cum_fit_error: Option<f64>,
}

/// Result of one recursive least-squares update.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsOutcome {
    pub c: DVector<f64>,
    /// `p = Kφ / (1 + φᵀKφ)`
    pub gain: DVector<f64>,
    /// `(I − pφᵀ)K`, symmetrized; `None` when the update was not committed.
    pub k: Option<DMatrix<f64>>,
}

/// `c ← c + p·v` with gain `p = Kφ/(1 + φᵀKφ)`; optionally also
/// `K ← (I − pφᵀ)K`.
pub fn rls_update(
    c: &DVector<f64>,
    k: &DMatrix<f64>,
    phi: &DVector<f64>,
    v: f64,
    commit: bool,
) -> Result<RlsOutcome> {
    let n = c.len();
    check_len("regressor", n, phi.len())?;
    check_len("linear covariance", n, k.nrows())?;
    let k_phi = k * phi;
    let denom = 1.0 + phi.dot(&k_phi);
    if !denom.is_finite() {
        return Err(Error::NonFinite {
            what: "RLS gain denominator",
            index: 0,
        });
    }
    let gain = k_phi / denom;
    if let Some(index) = gain.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "RLS gain",
            index,
        });
    }
    let c_new = c + &gain * v;
    let k_new = commit.then(|| {
        let mut updated = k - &gain * phi.tr_mul(k);
        symmetrize(&mut updated);
        updated
    });
    Ok(RlsOutcome {
        c: c_new,
        gain,
        k: k_new,
    })
}

/// Sliding window of the most recent observations (RVP).
#[derive(Debug, Clone, PartialEq)]
pub struct RvpWindow {
    capacity: usize,
    buf: VecDeque<Observation>,
}

impl RvpWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            buf: VecDeque::new(),
        }
    }

    pub fn push(&mut self, obs: Observation) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(obs);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.buf.iter()
    }
}

/// One configured estimator with its private state.
#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    state: RecursiveState,
    window: RvpWindow,
}

impl Estimator {
    pub fn new(
        model: &dyn SeparableModel,
        config: EstimatorConfig,
        initial: ParameterState,
    ) -> Result<Self> {
        initial.check_against(model)?;
        config.validate(initial.n())?;
        Ok(Self {
            state: RecursiveState::new(initial, config.s0, config.k0),
            window: RvpWindow::new(config.window_p),
            config,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn state(&self) -> &RecursiveState {
        &self.state
    }

    pub fn step(&mut self, model: &dyn SeparableModel, obs: &Observation) -> Result<StepTrace> {
        let (next, trace) = match self.config.algorithm {
            Algorithm::Repi => repi_step(model, &self.state, obs)?,
            Algorithm::Rgn => rgn_step(model, &self.state, obs)?,
            Algorithm::Hrgn => hrgn_step(model, &self.state, obs)?,
            Algorithm::Rvp => rvp_step(model, &self.state, &mut self.window, obs)?,
            Algorithm::Sgd => sgd_step(model, &self.state, obs, self.config.learning_rate)?,
        };
        self.state = next;
        Ok(trace)
    }
}

/// Runs one estimator over a stream from `initial`, one trace per
/// observation. Rejected steps are recorded and the stream continues.
pub fn run_stream(
    model: &dyn SeparableModel,
    config: &EstimatorConfig,
    initial: &ParameterState,
    observations: &[Observation],
    truth: Option<&ParameterState>,
) -> Result<Vec<StepTrace>> {
    if observations.is_empty() {
        return Err(Error::InvalidConfig("observation stream is empty".into()));
    }
    let mut est = Estimator::new(model, *config, initial.clone())?;
    let mut sq_sum = 0.0;
    let mut traces = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let mut trace = est.step(model, obs)?;
        trace.t = i as u64 + 1;
        sq_sum += trace.residual_before * trace.residual_before;
        trace.cum_fit_error = Some(sq_sum / trace.t as f64);
        if let Some(truth) = truth {
            trace.rel_error = Some(relative_param_error(&trace.theta_after, truth)?);
        }
        traces.push(trace);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_complex_exponential, rng_from_seed, SynthSpec};
    use crate::model::ComplexExponential3;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn scalar_rls_arithmetic() {
        let c = DVector::from_vec(vec![0.25]);
        let k = DMatrix::from_element(1, 1, 1.0);
        let phi = DVector::from_vec(vec![1.0]);
        let out = rls_update(&c, &k, &phi, 1.0, true).unwrap();
        assert_eq!(out.gain[0], 0.5);
        assert_eq!(out.c[0], 0.75);
        assert_eq!(out.k.unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn zero_innovation_keeps_coefficients() {
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let k = DMatrix::identity(2, 2) * 3.0;
        let phi = DVector::from_vec(vec![0.5, 2.0]);
        let out = rls_update(&c, &k, &phi, 0.0, true).unwrap();
        assert_eq!(out.c, c);
        let kn = out.k.unwrap();
        assert!(kn.trace() < k.trace());
        let uncommitted = rls_update(&c, &k, &phi, 0.0, false).unwrap();
        assert!(uncommitted.k.is_none());
    }

    #[test]
    fn overflowing_covariance_is_reported() {
        let c = DVector::from_vec(vec![1.0]);
        let k = DMatrix::from_element(1, 1, 1e308);
        let phi = DVector::from_vec(vec![1e10]);
        assert!(matches!(
            rls_update(&c, &k, &phi, 1.0, true),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn rls_matches_batch_least_squares() {
        let mut rng = rng_from_seed(17);
        let n = 4;
        let truth = DVector::from_vec(vec![1.5, -0.5, 2.0, 0.25]);
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        let mut c = DVector::zeros(n);
        let mut k = DMatrix::identity(n, n) * 1e8;
        for _ in 0..200 {
            let phi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = phi.dot(&truth) + 0.1 * rng.sample::<f64, _>(StandardNormal);
            let v = y - phi.dot(&c);
            let out = rls_update(&c, &k, &phi, v, true).unwrap();
            c = out.c;
            k = out.k.unwrap();
            rows.push(phi);
            ys.push(y);
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let y = DVector::from_vec(ys);
        // normal-equations oracle
        let batch = (a.tr_mul(&a)).lu().solve(&a.tr_mul(&y)).unwrap();
        assert!((&c - &batch).norm() <= 1e-4 * batch.norm());
    }

    #[test]
    fn config_validation() {
        let mut cfg = EstimatorConfig::new(Algorithm::Rvp);
        cfg.window_p = 2;
        assert!(cfg.validate(3).is_err());
        cfg.window_p = 3;
        assert!(cfg.validate(3).is_ok());
        let mut cfg = EstimatorConfig::default();
        cfg.s0 = 0.0;
        assert!(cfg.validate(3).is_err());
        let mut cfg = EstimatorConfig::new(Algorithm::Sgd);
        cfg.learning_rate = -1.0;
        assert!(cfg.validate(3).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("rlm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn truth_start_noise_free_is_fixed_point() {
        let mut spec = SynthSpec::benchmark(1);
        spec.noise_std = 0.0;
        spec.sample_count = 300;
        let obs = gen_complex_exponential(&spec).unwrap();
        let truth = spec.truth().unwrap();
        for alg in Algorithm::ALL {
            let traces = run_stream(
                &ComplexExponential3,
                &EstimatorConfig::new(alg),
                &truth,
                &obs,
                Some(&truth),
            )
            .unwrap();
            let worst = traces
                .iter()
                .map(|t| t.rel_error.unwrap())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-8, "{alg}: {worst}");
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let spec = SynthSpec::benchmark(5);
        let obs = gen_complex_exponential(&spec).unwrap();
        let init = ParameterState::from_slices(&[1.2, 1.1, 2.5, 1.0], &[1.0, 2.0, 1.0]).unwrap();
        for alg in Algorithm::ALL {
            let cfg = EstimatorConfig::new(alg);
            let a = run_stream(&ComplexExponential3, &cfg, &init, &obs, None).unwrap();
            let b = run_stream(&ComplexExponential3, &cfg, &init, &obs, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        let init = ParameterState::from_slices(&[1.0; 4], &[1.0; 3]).unwrap();
        assert!(run_stream(
            &ComplexExponential3,
            &EstimatorConfig::default(),
            &init,
            &[],
            None
        )
        .is_err());
    }
}
