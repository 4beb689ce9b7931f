use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelDescriptor, Observation, SeparableModel};
use crate::data::TimeSeries;
use crate::error::{Error, Result};

/// Structural orders of an RBF-ARX(p, q, m, d) model.
///
/// Parameter layout:
/// * nonlinear `a = (λ₁, z₁₁…z₁d, λ₂, z₂₁…z₂d, …)`, length `m·(1+d)`;
/// * linear `c = (c₀,₀…c₀,ₘ, c₁,₀…c₁,ₘ, …, c_p,ₘ, w-blocks)` where the
///   w-blocks run over lag `j = 1..q` (outer) and input channel (inner),
///   each holding `m+1` coefficients.
///
/// The explanatory vector `x` handed to the model is
/// `(state[d], ar_lags[p], exo_lags[q·input_dim])` with exogenous lags in the
/// same lag-major, channel-minor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbfArxSpec {
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub d: usize,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(default)]
    pub dl: usize,
}

impl RbfArxSpec {
    /// RBF-AR(p, m, d): no exogenous inputs.
    pub fn ar(p: usize, m: usize, d: usize) -> Self {
        Self {
            p,
            q: 0,
            m,
            d,
            input_dim: 0,
            dl: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 || self.m < 1 || self.d < 1 {
            return Err(Error::InvalidConfig(format!(
                "RBF-ARX orders need p, m, d >= 1 (got p={}, m={}, d={})",
                self.p, self.m, self.d
            )));
        }
        if self.q > 0 && self.input_dim == 0 {
            return Err(Error::InvalidConfig(
                "exogenous order q > 0 requires at least one input channel".into(),
            ));
        }
        Ok(())
    }

    fn exo_channels(&self) -> usize {
        if self.q == 0 {
            0
        } else {
            self.input_dim
        }
    }

    pub fn nonlinear_dim(&self) -> usize {
        self.m * (1 + self.d)
    }

    pub fn linear_dim(&self) -> usize {
        (self.p + 1) * (self.m + 1) + self.q * self.exo_channels() * (self.m + 1)
    }

    pub fn state_dim(&self) -> usize {
        self.d + self.p + self.q * self.exo_channels()
    }

    /// First series index at which every lag is available.
    pub fn first_usable(&self) -> usize {
        let exo = if self.q > 0 { self.q + self.dl } else { 0 };
        self.p.max(self.d).max(exo)
    }

    pub fn state_of<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.d]
    }

    pub fn ar_lags_of<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.d..self.d + self.p]
    }

    pub fn exo_lags_of<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.d + self.p..]
    }

    /// Packs widths and centers into the nonlinear parameter vector.
    pub fn pack_nonlinear(&self, widths: &[f64], centers: &[Vec<f64>]) -> Result<DVector<f64>> {
        if widths.len() != self.m || centers.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "RBF widths/centers",
                expected: self.m,
                actual: widths.len().min(centers.len()),
            });
        }
        let mut a = Vec::with_capacity(self.nonlinear_dim());
        for (w, z) in widths.iter().zip(centers) {
            if z.len() != self.d {
                return Err(Error::DimensionMismatch {
                    what: "RBF center",
                    expected: self.d,
                    actual: z.len(),
                });
            }
            a.push(*w);
            a.extend_from_slice(z);
        }
        Ok(DVector::from_vec(a))
    }

    /// Inverse of [`pack_nonlinear`](Self::pack_nonlinear).
    pub fn unpack_nonlinear(&self, a: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if a.len() != self.nonlinear_dim() {
            return Err(Error::DimensionMismatch {
                what: "RBF nonlinear parameters",
                expected: self.nonlinear_dim(),
                actual: a.len(),
            });
        }
        let (widths, centers) = a
            .chunks(1 + self.d)
            .map(|chunk| (chunk[0], chunk[1..].to_vec()))
            .unzip();
        Ok((widths, centers))
    }

    /// Index of `c_{i,k}` (`i = 0..=p`, `k = 0..=m`) in the linear vector.
    pub fn ar_coef_index(&self, i: usize, k: usize) -> usize {
        i * (self.m + 1) + k
    }

    /// Index of `w_{j,k}` for lag `j = 1..=q` and channel `ch`.
    pub fn exo_coef_index(&self, j: usize, ch: usize, k: usize) -> usize {
        (self.p + 1) * (self.m + 1) + ((j - 1) * self.exo_channels() + ch) * (self.m + 1) + k
    }
}

/// RBF-AR(X) model with Gaussian kernels `exp(−λ_k‖x − z_k‖²)`.
///
/// Widths are unconstrained; a negative `λ_k` turns a kernel into a growing
/// exponential (see [`RbfArx::negative_widths`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbfArx {
    spec: RbfArxSpec,
}

impl RbfArx {
    pub fn new(spec: RbfArxSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &RbfArxSpec {
        &self.spec
    }

    /// Indices `k` (0-based) of kernels whose width is negative.
    pub fn negative_widths(&self, a: &[f64]) -> Vec<usize> {
        a.chunks(1 + self.spec.d)
            .enumerate()
            .filter(|(_, chunk)| chunk[0] < 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    // g[0] = 1, g[k] = exp(-λ_k ||s - z_k||²); dist[k] = ||s - z_k||²
    fn kernels(&self, a: &[f64], state: &[f64], g: &mut [f64], dist: &mut [f64]) {
        let d = self.spec.d;
        g[0] = 1.0;
        dist[0] = 0.0;
        for (k, chunk) in a.chunks(1 + d).enumerate() {
            let sq: f64 = state
                .iter()
                .zip(&chunk[1..])
                .map(|(s, z)| (s - z) * (s - z))
                .sum();
            dist[k + 1] = sq;
            g[k + 1] = (-chunk[0] * sq).exp();
        }
    }

    // Multiplier of each basis row: 1 for the intercept block, then AR lags, then exo lags.
    fn regressor(&self, x: &[f64], block: usize) -> f64 {
        if block == 0 {
            1.0
        } else {
            x[self.spec.d + block - 1]
        }
    }

    fn blocks(&self) -> usize {
        1 + self.spec.p + self.spec.q * self.spec.exo_channels()
    }
}

impl SeparableModel for RbfArx {
    fn nonlinear_dim(&self) -> usize {
        self.spec.nonlinear_dim()
    }

    fn linear_dim(&self) -> usize {
        self.spec.linear_dim()
    }

    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::RbfArx(self.spec)
    }

    fn eval_basis(&self, a: &[f64], x: &[f64], out: &mut [f64]) {
        let m1 = self.spec.m + 1;
        let mut g = vec![0.0; m1];
        let mut dist = vec![0.0; m1];
        self.kernels(a, self.spec.state_of(x), &mut g, &mut dist);
        for block in 0..self.blocks() {
            let r = self.regressor(x, block);
            for k in 0..m1 {
                out[block * m1 + k] = g[k] * r;
            }
        }
    }

    fn eval_basis_jacobian(&self, a: &[f64], x: &[f64], out: &mut DMatrix<f64>) {
        let d = self.spec.d;
        let m1 = self.spec.m + 1;
        let state = self.spec.state_of(x);
        let mut g = vec![0.0; m1];
        let mut dist = vec![0.0; m1];
        self.kernels(a, state, &mut g, &mut dist);
        out.fill(0.0);
        for block in 0..self.blocks() {
            let r = self.regressor(x, block);
            for k in 1..m1 {
                let row = block * m1 + k;
                let col = (k - 1) * (1 + d);
                let lambda = a[col];
                out[(row, col)] = -dist[k] * g[k] * r;
                for l in 0..d {
                    let z = a[col + 1 + l];
                    out[(row, col + 1 + l)] = 2.0 * lambda * (state[l] - z) * g[k] * r;
                }
            }
        }
    }
}

/// Turns a time series into RBF-AR(X) observations.
///
/// The record at series position `t` has target `y_t` and explanatory
/// vector `(y_{t−1}…y_{t−d}, y_{t−1}…y_{t−p}, u_{t−1−dl}…u_{t−q−dl})`.
/// Positions below `holdout_from` go to the training list, the rest to the
/// holdout list.
pub fn build_regressors(
    series: &TimeSeries,
    spec: &RbfArxSpec,
    holdout_from: usize,
) -> Result<(Vec<Observation>, Vec<Observation>)> {
    spec.validate()?;
    let len = series.len();
    let start = spec.first_usable();
    if len <= start {
        return Err(Error::SeriesTooShort {
            len,
            required: start,
        });
    }
    if holdout_from < start || holdout_from > len {
        return Err(Error::HoldoutOutOfRange {
            index: holdout_from,
            min: start,
            max: len,
        });
    }
    let channels = spec.exo_channels();
    if series.inputs.len() < channels {
        return Err(Error::MissingChannels {
            expected: channels,
            actual: series.inputs.len(),
        });
    }

    let y = &series.y;
    let mut train = Vec::with_capacity(holdout_from - start);
    let mut holdout = Vec::with_capacity(len - holdout_from);
    for t in start..len {
        let mut x = Vec::with_capacity(spec.state_dim());
        x.extend((1..=spec.d).map(|lag| y[t - lag]));
        x.extend((1..=spec.p).map(|lag| y[t - lag]));
        for j in 1..=spec.q {
            for u in series.inputs.iter().take(channels) {
                x.push(u[t - j - spec.dl]);
            }
        }
        let obs = Observation::new(series.t[t], y[t], x);
        if t < holdout_from {
            train.push(obs);
        } else {
            holdout.push(obs);
        }
    }
    Ok((train, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{basis, basis_jacobian};
    use proptest::prelude::*;

    fn series(y: Vec<f64>, inputs: Vec<Vec<f64>>) -> TimeSeries {
        TimeSeries::new((0..y.len() as i64).collect(), y, inputs).unwrap()
    }

    #[test]
    fn dimensions() {
        let s = RbfArxSpec {
            p: 6,
            q: 5,
            m: 1,
            d: 2,
            input_dim: 2,
            dl: 0,
        };
        assert_eq!(s.nonlinear_dim(), 3);
        assert_eq!(s.linear_dim(), 7 * 2 + 5 * 2 * 2);
        let ar = RbfArxSpec::ar(5, 1, 2);
        assert_eq!((ar.nonlinear_dim(), ar.linear_dim()), (3, 12));
    }

    #[test]
    fn invalid_orders() {
        assert!(RbfArx::new(RbfArxSpec::ar(0, 1, 1)).is_err());
        assert!(RbfArx::new(RbfArxSpec::ar(1, 0, 1)).is_err());
        assert!(RbfArx::new(RbfArxSpec::ar(1, 1, 0)).is_err());
        let mut s = RbfArxSpec::ar(1, 1, 1);
        s.q = 2;
        assert!(RbfArx::new(s).is_err());
    }

    #[test]
    fn kernel_is_one_at_center() {
        let spec = RbfArxSpec::ar(1, 1, 2);
        let model = RbfArx::new(spec).unwrap();
        // a = (λ, z1, z2); x = (state(2), lag(1))
        let a = [7.5, 0.3, -0.2];
        let x = [0.3, -0.2, 4.0];
        let phi = basis(&model, &a, &x).unwrap();
        assert_eq!(phi.as_slice(), &[1.0, 1.0, 4.0, 4.0]);
        let jac = basis_jacobian(&model, &a, &x).unwrap();
        // derivative w.r.t. λ at the center vanishes
        assert_eq!(jac[(1, 0)], 0.0);
        assert_eq!(jac[(3, 0)], 0.0);
    }

    #[test]
    fn negative_widths_are_reported() {
        let model = RbfArx::new(RbfArxSpec::ar(1, 2, 1)).unwrap();
        assert_eq!(model.negative_widths(&[1.0, 0.0, -0.5, 1.0]), vec![1]);
    }

    #[test]
    fn constant_series_regressors() {
        let s = series(vec![3.0; 6], vec![]);
        let spec = RbfArxSpec::ar(1, 1, 1);
        let (train, hold) = build_regressors(&s, &spec, 4).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(hold.len(), 2);
        for obs in train.iter().chain(&hold) {
            assert_eq!(spec.state_of(&obs.x), &[3.0]);
            assert_eq!(spec.ar_lags_of(&obs.x), &[3.0]);
            assert_eq!(obs.y, 3.0);
        }
    }

    #[test]
    fn first_usable_target_and_lags() {
        let s = series((1..=10).map(f64::from).collect(), vec![]);
        let spec = RbfArxSpec::ar(5, 1, 2);
        let (train, _) = build_regressors(&s, &spec, 10).unwrap();
        let first = &train[0];
        assert_eq!(first.t, 5);
        assert_eq!(first.y, 6.0);
        assert_eq!(spec.state_of(&first.x), &[5.0, 4.0]);
        assert_eq!(spec.ar_lags_of(&first.x), &[5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn exogenous_lags_with_delay() {
        let y: Vec<f64> = (0..8).map(f64::from).collect();
        let u1: Vec<f64> = (0..8).map(|v| 100.0 + v as f64).collect();
        let u2: Vec<f64> = (0..8).map(|v| 200.0 + v as f64).collect();
        let s = series(y, vec![u1, u2]);
        let spec = RbfArxSpec {
            p: 1,
            q: 2,
            m: 1,
            d: 1,
            input_dim: 2,
            dl: 1,
        };
        let (train, _) = build_regressors(&s, &spec, 8).unwrap();
        assert_eq!(train[0].t, 3);
        assert_eq!(
            spec.exo_lags_of(&train[0].x),
            &[101.0, 201.0, 100.0, 200.0]
        );
    }

    #[test]
    fn regressor_errors() {
        let s = series(vec![1.0, 2.0], vec![]);
        assert!(matches!(
            build_regressors(&s, &RbfArxSpec::ar(2, 1, 1), 2),
            Err(Error::SeriesTooShort { .. })
        ));
        let s = series(vec![1.0; 10], vec![]);
        assert!(matches!(
            build_regressors(&s, &RbfArxSpec::ar(2, 1, 1), 11),
            Err(Error::HoldoutOutOfRange { .. })
        ));
        let spec = RbfArxSpec {
            p: 1,
            q: 1,
            m: 1,
            d: 1,
            input_dim: 1,
            dl: 0,
        };
        assert!(matches!(
            build_regressors(&s, &spec, 5),
            Err(Error::MissingChannels { .. })
        ));
    }

    // Independent builder: explicit lag matrix via index arithmetic on columns.
    fn lag_matrix(y: &[f64], u: &[Vec<f64>], spec: &RbfArxSpec) -> Vec<Vec<f64>> {
        let start = spec.first_usable();
        let mut rows = Vec::new();
        for t in start..y.len() {
            let mut row = vec![0.0; spec.state_dim()];
            for c in 0..spec.d {
                row[c] = y[t - 1 - c];
            }
            for c in 0..spec.p {
                row[spec.d + c] = y[t - 1 - c];
            }
            let mut col = spec.d + spec.p;
            for j in 0..spec.q {
                for ch in u.iter() {
                    row[col] = ch[t - 1 - j - spec.dl];
                    col += 1;
                }
            }
            rows.push(row);
        }
        rows
    }

    proptest! {
        #[test]
        fn regressors_match_lag_matrix(
            y in prop::collection::vec(-5.0f64..5.0, 20..40),
            p in 1usize..4, d in 1usize..4, q in 0usize..3, dl in 0usize..3,
        ) {
            let len = y.len();
            let u = vec![(0..len).map(|i| (i as f64).sin()).collect::<Vec<_>>()];
            let spec = RbfArxSpec { p, q, m: 1, d, input_dim: 1, dl };
            let s = series(y.clone(), u.clone());
            let (train, hold) = build_regressors(&s, &spec, len).unwrap();
            prop_assert!(hold.is_empty());
            let want = lag_matrix(&y, if q > 0 { &u } else { &[] }, &spec);
            prop_assert_eq!(train.len(), want.len());
            for (obs, row) in train.iter().zip(&want) {
                prop_assert_eq!(&obs.x, row);
            }
        }

        #[test]
        fn packing_round_trip(m in 1usize..4, d in 1usize..4, seed in 0u64..1000) {
            let spec = RbfArxSpec::ar(1, m, d);
            let widths: Vec<f64> = (0..m).map(|k| seed as f64 * 0.01 + k as f64).collect();
            let centers: Vec<Vec<f64>> = (0..m)
                .map(|k| (0..d).map(|l| (k * d + l) as f64 - 0.5).collect())
                .collect();
            let a = spec.pack_nonlinear(&widths, &centers).unwrap();
            prop_assert_eq!(a.len(), spec.nonlinear_dim());
            let (w2, c2) = spec.unpack_nonlinear(a.as_slice()).unwrap();
            prop_assert_eq!(w2, widths);
            prop_assert_eq!(c2, centers);
            let model = RbfArx::new(spec).unwrap();
            let phi = basis(&model, a.as_slice(), &vec![0.1; spec.state_dim()]).unwrap();
            prop_assert_eq!(phi.len(), spec.linear_dim());
        }

        #[test]
        fn jacobian_matches_central_differences(
            lam in 0.1f64..2.0, z0 in -1.0f64..1.0, z1 in -1.0f64..1.0,
            lam2 in 0.1f64..2.0, z2 in -1.0f64..1.0, z3 in -1.0f64..1.0,
            xs in prop::collection::vec(-1.5f64..1.5, 5),
        ) {
            let spec = RbfArxSpec { p: 2, q: 1, m: 2, d: 2, input_dim: 1, dl: 0 };
            let model = RbfArx::new(spec).unwrap();
            let a = [lam, z0, z1, lam2, z2, z3];
            let jac = basis_jacobian(&model, &a, &xs).unwrap();
            let h = 1e-6;
            for i in 0..a.len() {
                let mut ap = a;
                let mut am = a;
                ap[i] += h;
                am[i] -= h;
                let fp = basis(&model, &ap, &xs).unwrap();
                let fm = basis(&model, &am, &xs).unwrap();
                for j in 0..spec.linear_dim() {
                    let fd = (fp[j] - fm[j]) / (2.0 * h);
                    let scale = jac[(j, i)].abs().max(1e-3);
                    prop_assert!((fd - jac[(j, i)]).abs() <= 1e-5 * scale);
                }
            }
        }
    }
}
