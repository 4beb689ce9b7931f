//! Small dense helpers shared by the batch and recursive solvers.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Largest condition number (after column equilibration) accepted for a
/// least-squares design matrix.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Thin SVD of a column-equilibrated tall matrix `A = (U Σ Vᵀ) D`.
#[derive(Debug, Clone)]
pub struct EquilibratedSvd {
    u: DMatrix<f64>,
    singular: DVector<f64>,
    v_t: DMatrix<f64>,
    col_scale: DVector<f64>,
    condition: f64,
}

impl EquilibratedSvd {
    /// Fails with [`Error::Singular`] when the equilibrated condition number
    /// exceeds [`MAX_CONDITION`] or the matrix is wide.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let col_scale = DVector::from_iterator(
            n,
            a.column_iter().map(|col| {
                let norm = col.norm();
                if norm > 0.0 {
                    norm
                } else {
                    1.0
                }
            }),
        );
        let mut scaled = a.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= col_scale[j];
        }
        let svd = SVD::new(scaled, true, true);
        let singular = svd.singular_values;
        let smax = singular.max();
        let smin = singular.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        Ok(Self {
            u: svd.u.expect("u requested"),
            singular,
            v_t: svd.v_t.expect("v_t requested"),
            col_scale,
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `A† b`, the minimum-norm least-squares solution.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut w = self.u.tr_mul(b);
        w.component_div_assign(&self.singular);
        let mut x = self.v_t.tr_mul(&w);
        x.component_div_assign(&self.col_scale);
        x
    }

    /// `(A†)ᵀ w = A (AᵀA)⁻¹ w`.
    pub fn pinv_transpose_mul(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut z = w.component_div(&self.col_scale);
        z = &self.v_t * z;
        z.component_div_assign(&self.singular);
        &self.u * z
    }

    /// Projection onto the range of `A`.
    pub fn project(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.u * self.u.tr_mul(b)
    }

    /// Projection onto the orthogonal complement of the range of `A`.
    pub fn project_complement(&self, b: &DVector<f64>) -> DVector<f64> {
        b - self.project(b)
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_badly_scaled_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1e8, 2.0, 0.0, 0.0, 3e8]);
        let x = DVector::from_vec(vec![0.5, -2e-8]);
        let b = &a * &x;
        let svd = EquilibratedSvd::new(&a).unwrap();
        let got = svd.solve(&b);
        assert!((got[0] - 0.5).abs() < 1e-12);
        assert!((got[1] + 2e-8).abs() < 1e-20);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            EquilibratedSvd::new(&a),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn symmetrize_averages() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }
}
