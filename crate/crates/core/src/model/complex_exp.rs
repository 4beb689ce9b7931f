use nalgebra::DMatrix;

use super::{ModelDescriptor, SeparableModel};

/// Three-term complex exponential model, `k = 4`, `n = 3`, `x ∈ R³`:
///
/// ```text
/// φ₁ = exp(−a₂x₁²)·cos(a₃x₁)
/// φ₂ = exp(−a₁x₁²)·cos(a₂x₂)
/// φ₃ = exp(−a₄x₁²)·sin(a₁x₃)
/// ```
///
/// The cross-wired indices are deliberate; only `x₁` enters the envelopes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComplexExponential3;

impl SeparableModel for ComplexExponential3 {
    fn nonlinear_dim(&self) -> usize {
        4
    }

    fn linear_dim(&self) -> usize {
        3
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::ComplexExponential3
    }

    fn eval_basis(&self, a: &[f64], x: &[f64], out: &mut [f64]) {
        let x1s = x[0] * x[0];
        out[0] = (-a[1] * x1s).exp() * (a[2] * x[0]).cos();
        out[1] = (-a[0] * x1s).exp() * (a[1] * x[1]).cos();
        out[2] = (-a[3] * x1s).exp() * (a[0] * x[2]).sin();
    }

    fn eval_basis_jacobian(&self, a: &[f64], x: &[f64], out: &mut DMatrix<f64>) {
        let x1s = x[0] * x[0];
        out.fill(0.0);

        let e2 = (-a[1] * x1s).exp();
        let (s3, c3) = (a[2] * x[0]).sin_cos();
        out[(0, 1)] = -x1s * e2 * c3;
        out[(0, 2)] = -e2 * s3 * x[0];

        let e1 = (-a[0] * x1s).exp();
        let (s2, c2) = (a[1] * x[1]).sin_cos();
        out[(1, 0)] = -x1s * e1 * c2;
        out[(1, 1)] = -e1 * s2 * x[1];

        let e4 = (-a[3] * x1s).exp();
        let (s1, c1) = (a[0] * x[2]).sin_cos();
        out[(2, 3)] = -x1s * e4 * s1;
        out[(2, 0)] = e4 * c1 * x[2];
    }
}
