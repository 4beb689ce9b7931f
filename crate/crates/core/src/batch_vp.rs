//! Offline variable projection on a batch of observations.
//!
//! For fixed nonlinear parameters `a` the optimal coefficients are
//! `ĉ = Φ(a)† y`, leaving the reduced residual `r₂(a) = P⊥ y` with
//! `P⊥ = I − ΦΦ†`. This module evaluates that residual, its exact
//! (Golub–Pereyra) Jacobian and Kaufman's one-term simplification, the
//! embedded-point-iteration direction, and a backtracking Gauss–Newton fitter
//! over `a` alone.
//!
//! Least-squares solves go through an SVD of the column-equilibrated design
//! matrix; normal equations are only formed by the embedded point iteration,
//! whose block system is normal-equation shaped by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::EquilibratedSvd;
use crate::model::{basis, basis_jacobian, Observation, ParameterState, SeparableModel};

/// Targets and explanatory vectors for one model.
#[derive(Debug, Clone)]
pub struct BatchDataset<'m> {
    pub y: DVector<f64>,
    pub xs: Vec<Vec<f64>>,
    pub model: &'m dyn SeparableModel,
}

impl<'m> BatchDataset<'m> {
    pub fn new(model: &'m dyn SeparableModel, y: DVector<f64>, xs: Vec<Vec<f64>>) -> Result<Self> {
        check_len("state vector list", y.len(), xs.len())?;
        if y.len() < model.linear_dim() {
            return Err(Error::InvalidConfig(format!(
                "{} observations cannot determine {} linear parameters",
                y.len(),
                model.linear_dim()
            )));
        }
        for x in &xs {
            check_len("state vector", model.state_dim(), x.len())?;
        }
        Ok(Self { y, xs, model })
    }

    pub fn from_observations(model: &'m dyn SeparableModel, obs: &[Observation]) -> Result<Self> {
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
        Self::new(model, y, obs.iter().map(|o| o.x.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `Φ(a)` with row `i` equal to `φ(a; x_i)`.
pub fn design_matrix(data: &BatchDataset<'_>, a: &[f64]) -> Result<DMatrix<f64>> {
    let n = data.model.linear_dim();
    let mut phi = DMatrix::zeros(data.len(), n);
    for (i, x) in data.xs.iter().enumerate() {
        let row = basis(data.model, a, x)?;
        phi.row_mut(i).copy_from(&row.transpose());
    }
    Ok(phi)
}

/// Everything derived from a single evaluation of `Φ(a)`.
struct Projection {
    svd: EquilibratedSvd,
    c_hat: DVector<f64>,
    /// `P⊥ y = y − Φĉ`
    r2: DVector<f64>,
    /// Per-row `∂φ/∂a` (`n × k`).
    row_jacobians: Vec<DMatrix<f64>>,
}

impl Projection {
    fn new(data: &BatchDataset<'_>, a: &[f64], with_jacobians: bool) -> Result<Self> {
        let phi = design_matrix(data, a)?;
        let svd = EquilibratedSvd::new(&phi)?;
        let c_hat = svd.solve(&data.y);
        let r2 = &data.y - &phi * &c_hat;
        let row_jacobians = if with_jacobians {
            data.xs
                .iter()
                .map(|x| basis_jacobian(data.model, a, x))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            svd,
            c_hat,
            r2,
            row_jacobians,
        })
    }

    /// `DΦ·w` (`m × k`): column `ℓ` stacks `Σ_j ∂φ_j/∂a_ℓ (x_i) w_j`.
    fn dphi_times(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let m = self.row_jacobians.len();
        let k = self.row_jacobians.first().map_or(0, |j| j.ncols());
        let mut out = DMatrix::zeros(m, k);
        for (i, jac) in self.row_jacobians.iter().enumerate() {
            out.row_mut(i).copy_from(&(jac.tr_mul(w)).transpose());
        }
        out
    }

    /// `−P⊥·DΦ·Φ†y`
    fn kaufman(&self) -> DMatrix<f64> {
        let mut j = self.dphi_times(&self.c_hat);
        for mut col in j.column_iter_mut() {
            let projected = self.svd.project_complement(&col.clone_owned());
            col.copy_from(&(-projected));
        }
        j
    }

    /// `−(P⊥·DΦ·Φ†)ᵀ y`; column `ℓ` is `−(Φ†)ᵀ (∂Φ/∂a_ℓ)ᵀ P⊥y`.
    fn gp_second_term(&self) -> DMatrix<f64> {
        let m = self.r2.len();
        let n = self.c_hat.len();
        let k = self.row_jacobians.first().map_or(0, |j| j.ncols());
        let mut b = DMatrix::zeros(n, k);
        for (jac, r) in self.row_jacobians.iter().zip(self.r2.iter()) {
            b += jac * *r;
        }
        let mut out = DMatrix::zeros(m, k);
        for (l, col) in b.column_iter().enumerate() {
            out.set_column(l, &(-self.svd.pinv_transpose_mul(&col.clone_owned())));
        }
        out
    }
}

/// `(ĉ, Φĉ − y)` for the least-squares problem at fixed `a`.
pub fn solve_linear(data: &BatchDataset<'_>, a: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = Projection::new(data, a, false)?;
    Ok((p.c_hat, -p.r2))
}

/// `(P⊥y, ‖P⊥y‖²)`.
pub fn reduced_residual(data: &BatchDataset<'_>, a: &[f64]) -> Result<(DVector<f64>, f64)> {
    let p = Projection::new(data, a, false)?;
    let r2 = p.r2.norm_squared();
    Ok((p.r2, r2))
}

/// Exact Jacobian of `P⊥(a) y` with respect to `a` (`m × k`).
pub fn jacobian_gp(data: &BatchDataset<'_>, a: &[f64]) -> Result<DMatrix<f64>> {
    let p = Projection::new(data, a, true)?;
    Ok(p.kaufman() + p.gp_second_term())
}

/// Kaufman's simplified Jacobian `−P⊥·DΦ·Φ†y` (`m × k`).
pub fn jacobian_kaufman(data: &BatchDataset<'_>, a: &[f64]) -> Result<DMatrix<f64>> {
    let p = Projection::new(data, a, true)?;
    Ok(p.kaufman())
}

/// Direction `(Δa, Δc)` of one embedded point iteration.
///
/// The coefficients in `state` are replaced by the least-squares optimum
/// `ĉ(a)`, so the linear right-hand side of the joint Gauss–Newton system
/// vanishes. With `J_a = DΦ·ĉ`, `J_c = Φ` and `r = Φĉ − y` the block system
///
/// ```text
/// [ J_aᵀJ_a  J_aᵀJ_c ] [Δa]   [ −J_aᵀ r ]
/// [ J_cᵀJ_a  J_cᵀJ_c ] [Δc] = [    0    ]
/// ```
///
/// is solved directly (LU with one round of iterative refinement). `Δc` is
/// relative to `ĉ`.
pub fn epi_direction(
    data: &BatchDataset<'_>,
    state: &ParameterState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    state.check_against(data.model)?;
    let p = Projection::new(data, state.a.as_slice(), true)?;
    let phi = design_matrix(data, state.a.as_slice())?;
    let ja = p.dphi_times(&p.c_hat);
    let r = -&p.r2;
    let k = ja.ncols();
    let n = phi.ncols();

    let mut block = DMatrix::zeros(k + n, k + n);
    block.view_mut((0, 0), (k, k)).copy_from(&ja.tr_mul(&ja));
    block.view_mut((0, k), (k, n)).copy_from(&ja.tr_mul(&phi));
    block.view_mut((k, 0), (n, k)).copy_from(&phi.tr_mul(&ja));
    block.view_mut((k, k), (n, n)).copy_from(&phi.tr_mul(&phi));
    let mut rhs = DVector::zeros(k + n);
    rhs.rows_mut(0, k).copy_from(&(-ja.tr_mul(&r)));

    let lu = block.clone().full_piv_lu();
    let mut sol = lu.solve(&rhs).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let correction = lu
        .solve(&(&rhs - &block * &sol))
        .ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
    sol += correction;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    Ok((sol.rows(0, k).into_owned(), sol.rows(k, n).into_owned()))
}

/// Gauss–Newton step `Δa` minimizing `‖J Δa + r₂‖` for the given Jacobian.
pub fn gauss_newton_step(jacobian: &DMatrix<f64>, r2: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = EquilibratedSvd::new(jacobian)?;
    Ok(-svd.solve(r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianVariant {
    GolubPereyra,
    Kaufman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpOptions {
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub jacobian: JacobianVariant,
    pub backtracking: bool,
}

impl Default for VpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            jacobian: JacobianVariant::Kaufman,
            backtracking: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpSolveReport {
    pub a_hat: DVector<f64>,
    pub c_hat: DVector<f64>,
    pub iterations: usize,
    /// `r₂` at the start point and after every accepted step.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 20;
const LEVENBERG_MU0: f64 = 1e-6;
const LEVENBERG_ESCALATIONS: usize = 8;

fn levenberg_step(jacobian: &DMatrix<f64>, r2: &DVector<f64>) -> Result<DVector<f64>> {
    let jtj = jacobian.tr_mul(jacobian);
    let rhs = -jacobian.tr_mul(r2);
    let k = jtj.nrows();
    let mut mu = LEVENBERG_MU0;
    for _ in 0..=LEVENBERG_ESCALATIONS {
        let damped = &jtj + DMatrix::identity(k, k) * mu;
        if let Some(chol) = damped.cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Ok(step);
            }
        }
        mu *= 10.0;
    }
    Err(Error::Singular {
        condition: f64::INFINITY,
    })
}

/// Gauss–Newton on the reduced function with Armijo backtracking
/// (`c = 1e-4`, halving up to 20 times). When the Jacobian is numerically
/// rank deficient the step falls back to Levenberg damping `μ = 1e-6·10^i`,
/// `i ≤ 8`.
pub fn vp_fit(data: &BatchDataset<'_>, a0: &DVector<f64>, opts: &VpOptions) -> Result<VpSolveReport> {
    check_len("initial nonlinear parameters", data.model.nonlinear_dim(), a0.len())?;
    let mut a = a0.clone();
    let mut proj = Projection::new(data, a.as_slice(), true)?;
    let mut r2 = proj.r2.norm_squared();
    let mut history = vec![r2];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < opts.max_iter {
        let jac = match opts.jacobian {
            JacobianVariant::Kaufman => proj.kaufman(),
            JacobianVariant::GolubPereyra => proj.kaufman() + proj.gp_second_term(),
        };
        let grad = jac.tr_mul(&proj.r2);
        if grad.norm() <= opts.gradient_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let step = match gauss_newton_step(&jac, &proj.r2) {
            Ok(step) => step,
            Err(Error::Singular { .. }) => levenberg_step(&jac, &proj.r2)?,
            Err(e) => return Err(e),
        };
        let slope = 2.0 * grad.dot(&step);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &a + &step * scale;
            if let Ok(p) = Projection::new(data, trial.as_slice(), true) {
                let trial_r2 = p.r2.norm_squared();
                if !opts.backtracking || trial_r2 <= r2 + ARMIJO_C * scale * slope {
                    accepted = Some((trial, p, trial_r2));
                    break;
                }
            } else if !opts.backtracking {
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, p, trial_r2)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let step_norm = (&trial - &a).norm();
        a = trial;
        proj = p;
        r2 = trial_r2;
        history.push(r2);
        iterations += 1;
        if step_norm <= opts.step_tol {
            termination = Termination::StepTolerance;
            break;
        }
    }

    let converged = matches!(
        termination,
        Termination::GradientTolerance | Termination::StepTolerance
    );
    Ok(VpSolveReport {
        c_hat: proj.c_hat,
        a_hat: a,
        iterations,
        residual_history: history,
        converged,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComplexExponential3, LinearBasis};

    #[test]
    fn constant_basis_design_matrix() {
        let model = LinearBasis::new(1);
        let data =
            BatchDataset::new(&model, DVector::from_vec(vec![1.0, 2.0, 3.0]), vec![vec![1.0]; 3])
                .unwrap();
        let phi = design_matrix(&data, &[]).unwrap();
        assert!(phi.iter().all(|v| *v == 1.0));
        assert_eq!(phi.shape(), (3, 1));
        // DΦ = 0 for an a-independent basis
        assert_eq!(jacobian_gp(&data, &[]).unwrap().shape(), (3, 0));
    }

    #[test]
    fn identity_design_reproduces_targets() {
        let model = LinearBasis::new(3);
        let xs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let data = BatchDataset::new(&model, y.clone(), xs).unwrap();
        assert_eq!(design_matrix(&data, &[]).unwrap(), DMatrix::identity(3, 3));
        let (c, res) = solve_linear(&data, &[]).unwrap();
        assert!((c - &y).norm() < 1e-14);
        assert!(res.norm() < 1e-14);
        let (_, r2) = reduced_residual(&data, &[]).unwrap();
        assert!(r2 < 1e-28);
    }

    #[test]
    fn orthogonal_targets_are_untouched() {
        let model = LinearBasis::new(1);
        let xs = vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]];
        let y = DVector::from_vec(vec![0.0, 0.0, 3.0, -4.0]);
        let data = BatchDataset::new(&model, y.clone(), xs).unwrap();
        let (r2_vec, r2) = reduced_residual(&data, &[]).unwrap();
        assert!((r2_vec - y).norm() < 1e-15);
        assert!((r2 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design_reports_condition() {
        let model = LinearBasis::new(2);
        let xs = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![-1.0, -2.0]];
        let data = BatchDataset::new(&model, DVector::from_vec(vec![1.0, 2.0, 3.0]), xs).unwrap();
        match solve_linear(&data, &[]).unwrap_err() {
            Error::Singular { condition } => assert!(condition > 1e12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_observations() {
        let model = ComplexExponential3;
        let err = BatchDataset::new(&model, DVector::from_vec(vec![1.0, 2.0]), vec![vec![0.0; 3]; 2]);
        assert!(err.is_err());
    }

    #[test]
    fn starting_at_optimum_converges_immediately() {
        let model = ComplexExponential3;
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let s = i as f64 * 0.37;
                vec![s.sin(), (1.3 * s).cos(), (0.7 * s).sin() * 1.5]
            })
            .collect();
        let truth = ParameterState::from_slices(&[1.0, 1.5, 3.0, 0.8], &[2.0, 3.0, 2.0]).unwrap();
        let y = DVector::from_iterator(
            xs.len(),
            xs.iter().map(|x| crate::model::predict(&model, &truth, x).unwrap()),
        );
        let data = BatchDataset::new(&model, y.clone(), xs).unwrap();
        let report = vp_fit(&data, &truth.a, &VpOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert!(*report.residual_history.last().unwrap() <= 1e-16 * y.norm_squared());
    }
}
