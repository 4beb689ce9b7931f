#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use repi_core::model::{ComplexExponential3, ModelDescriptor};
use repi_core::{Observation, ParameterState, SeparableModel};

/// `y = c·exp(−a·x)`, the scalar toy model.
#[derive(Debug)]
pub struct ScalarExp;

impl SeparableModel for ScalarExp {
    fn nonlinear_dim(&self) -> usize {
        1
    }
    fn linear_dim(&self) -> usize {
        1
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Linear { n: 1 }
    }
    fn eval_basis(&self, a: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = (-a[0] * x[0]).exp();
    }
    fn eval_basis_jacobian(&self, a: &[f64], x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = -x[0] * (-a[0] * x[0]).exp();
    }
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn truth() -> ParameterState {
    ParameterState::from_slices(&[1.0, 1.5, 3.0, 0.8], &[2.0, 3.0, 2.0]).unwrap()
}

/// Complex-exponential instance: `m` standard-normal inputs, noisy targets
/// from a perturbed truth, and a perturbed starting point.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize) -> (Vec<Vec<f64>>, DVector<f64>, DVector<f64>) {
    let model = ComplexExponential3;
    let t = truth();
    let xs: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| normal(rng)).collect()).collect();
    let y = DVector::from_iterator(
        m,
        xs.iter().map(|x| {
            let mut phi = [0.0; 3];
            model.eval_basis(t.a.as_slice(), x, &mut phi);
            phi.iter().zip(t.c.iter()).map(|(p, c)| p * c).sum::<f64>() + 0.3 * normal(rng)
        }),
    );
    let a = DVector::from_iterator(4, t.a.iter().map(|v| v * uniform(rng, 0.8, 1.2)));
    (xs, y, a)
}

pub fn design(model: &dyn SeparableModel, a: &[f64], xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = model.linear_dim();
    let mut phi = DMatrix::zeros(xs.len(), n);
    let mut row = vec![0.0; n];
    for (i, x) in xs.iter().enumerate() {
        model.eval_basis(a, x, &mut row);
        for j in 0..n {
            phi[(i, j)] = row[j];
        }
    }
    phi
}

/// `∂(Φc)/∂a` row by row, i.e. `DΦ·c` as an `m × k` matrix.
pub fn dphi_c(model: &dyn SeparableModel, a: &[f64], xs: &[Vec<f64>], c: &DVector<f64>) -> DMatrix<f64> {
    let (n, k) = (model.linear_dim(), model.nonlinear_dim());
    let mut out = DMatrix::zeros(xs.len(), k);
    let mut jac = DMatrix::zeros(n, k);
    for (i, x) in xs.iter().enumerate() {
        model.eval_basis_jacobian(a, x, &mut jac);
        out.row_mut(i).copy_from(&(jac.transpose() * c).transpose());
    }
    out
}

/// Normal-equations oracle: `(ΦᵀΦ)⁻¹Φᵀy` through an explicit inverse.
pub fn normal_equations(phi: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let gram_inv = (phi.transpose() * phi).try_inverse().expect("full rank");
    gram_inv * phi.transpose() * y
}

/// `I − Φ(ΦᵀΦ)⁻¹Φᵀ` built explicitly.
pub fn explicit_complement(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let m = phi.nrows();
    let gram_inv = (phi.transpose() * phi).try_inverse().expect("full rank");
    DMatrix::identity(m, m) - phi * gram_inv * phi.transpose()
}

pub fn rel_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

pub fn is_sym_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(1.0);
    let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
    asym <= tol * scale && min_eig >= -tol * scale
}

pub fn complex_exp_stream(rng: &mut ChaCha8Rng, len: usize, noise: f64) -> Vec<Observation> {
    let model = ComplexExponential3;
    let t = truth();
    (0..len)
        .map(|i| {
            let x: Vec<f64> = (0..3).map(|_| normal(rng)).collect();
            let mut phi = [0.0; 3];
            model.eval_basis(t.a.as_slice(), &x, &mut phi);
            let clean: f64 = phi.iter().zip(t.c.iter()).map(|(p, c)| p * c).sum();
            Observation::new(i as i64 + 1, clean + noise * normal(rng), x)
        })
        .collect()
}
