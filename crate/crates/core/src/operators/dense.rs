//! Explicit-matrix operator for small problems and reference solutions.

use super::{ball_step, norm, ForwardOperator};
use crate::error::{shape_mismatch, Result};
use crate::linalg::Cholesky;
use crate::Real;
use ndarray::{Array1, Array2};

/// `Gamma` given as an `m x (h*w)` matrix acting on row-major flattened
/// images; measurements are `m x 1` arrays.
#[derive(Clone, Debug)]
pub struct DenseOperator<T: Real> {
    matrix: Array2<T>,
    image_shape: (usize, usize),
    gram: Cholesky<T>,
    lipschitz: T,
}

impl<T: Real> DenseOperator<T> {
    /// `Gamma Gamma^T` must be positive definite (full row rank).
    pub fn new(matrix: Array2<T>, image_shape: (usize, usize)) -> Result<Self> {
        if matrix.ncols() != image_shape.0 * image_shape.1 {
            return Err(shape_mismatch(image_shape.0 * image_shape.1, matrix.ncols()));
        }
        let gram_m = matrix.dot(&matrix.t());
        let gram = Cholesky::new(&gram_m)?;
        let lipschitz = super::power_iteration(
            |x: &Array2<T>| {
                matrix
                    .dot(&Array1::from_iter(x.iter().copied()))
                    .insert_axis(ndarray::Axis(1))
            },
            |y: &Array2<T>| matrix.t().dot(&y.column(0)).into_shape_with_order(image_shape).unwrap(),
            image_shape,
            200,
        );
        Ok(Self {
            matrix,
            image_shape,
            gram,
            lipschitz,
        })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }
}

impl<T: Real> ForwardOperator<T> for DenseOperator<T> {
    fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    fn measurement_shape(&self) -> (usize, usize) {
        (self.matrix.nrows(), 1)
    }

    fn apply(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_image(x)?;
        let v = Array1::from_iter(x.iter().copied());
        Ok(self.matrix.dot(&v).insert_axis(ndarray::Axis(1)))
    }

    fn adjoint(&self, y: &Array2<T>) -> Result<Array2<T>> {
        self.check_measurement(y)?;
        let v = self.matrix.t().dot(&y.column(0));
        Ok(v.into_shape_with_order(self.image_shape).expect("image size"))
    }

    fn project_measurements(&self, u: &Array2<T>, y: &Array2<T>, eps: T) -> Result<Array2<T>> {
        let r = y - &self.apply(u)?;
        let rn = norm(&r);
        if rn <= eps {
            return Ok(u.clone());
        }
        let lam = self.gram.solve_vec(r.column(0)).insert_axis(ndarray::Axis(1));
        Ok(ball_step(u, self.adjoint(&lam)?, rn, eps))
    }

    fn right_inverse(&self, y: &Array2<T>) -> Result<Array2<T>> {
        self.project_measurements(&Array2::zeros(self.image_shape), y, T::zero())
    }

    fn lipschitz(&self) -> T {
        self.lipschitz
    }
}
