use nalgebra::DMatrix;

use super::{ModelDescriptor, SeparableModel};

/// Purely linear model `f = cᵀx` with no nonlinear parameters (`k = 0`).
///
/// Used to check that the separable estimators reduce to recursive least
/// squares when the nonlinear part is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearBasis {
    pub n: usize,
}

impl LinearBasis {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl SeparableModel for LinearBasis {
    fn nonlinear_dim(&self) -> usize {
        0
    }

    fn linear_dim(&self) -> usize {
        self.n
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Linear { n: self.n }
    }

    fn eval_basis(&self, _a: &[f64], x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn eval_basis_jacobian(&self, _a: &[f64], _x: &[f64], _out: &mut DMatrix<f64>) {}
}
