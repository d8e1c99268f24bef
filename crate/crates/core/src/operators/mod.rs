//! Linear measurement operators and projections onto their measurement sets.

mod dense;
mod radon;
mod sr;

pub use dense::DenseOperator;
pub use radon::{radon_adjoint, radon_apply, radon_right_inverse, Radon, RadonSettings, RightInverse, Sinogram};
pub use sr::{sr_apply, sr_project_measurements, Decimation, SrKernel};

use crate::error::{shape_mismatch, Result};
use crate::Real;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A linear forward model `y = Gamma x` on images.
pub trait ForwardOperator<T: Real>: Send + Sync {
    /// `(height, width)` of the images the operator acts on.
    fn image_shape(&self) -> (usize, usize);

    /// `(rows, cols)` of a measurement array.
    fn measurement_shape(&self) -> (usize, usize);

    fn apply(&self, x: &Array2<T>) -> Result<Array2<T>>;

    fn adjoint(&self, y: &Array2<T>) -> Result<Array2<T>>;

    /// Moves `u` onto `{v : ||Gamma v - y|| <= eps}`.
    fn project_measurements(&self, u: &Array2<T>, y: &Array2<T>, eps: T) -> Result<Array2<T>>;

    /// Component of `g` in the null space of `Gamma`, `g - Gamma^+ Gamma g`.
    fn project_nullspace(&self, g: &Array2<T>) -> Result<Array2<T>> {
        self.project_measurements(g, &Array2::zeros(self.measurement_shape()), T::zero())
    }

    /// Some `z` with `Gamma z ~= y`.
    fn right_inverse(&self, y: &Array2<T>) -> Result<Array2<T>>;

    /// Upper estimate of `||Gamma||^2`.
    fn lipschitz(&self) -> T;

    fn check_image(&self, x: &Array2<T>) -> Result<()> {
        if x.dim() != self.image_shape() {
            return Err(shape_mismatch(self.image_shape(), x.dim()));
        }
        Ok(())
    }

    fn check_measurement(&self, y: &Array2<T>) -> Result<()> {
        if y.dim() != self.measurement_shape() {
            return Err(shape_mismatch(self.measurement_shape(), y.dim()));
        }
        Ok(())
    }
}

/// `||Gamma u - y||_2`.
pub fn measurement_distance<T: Real>(op: &dyn ForwardOperator<T>, u: &Array2<T>, y: &Array2<T>) -> Result<T> {
    op.check_measurement(y)?;
    let r = op.apply(u)? - y;
    Ok(norm(&r))
}

pub(crate) fn norm<T: Real>(a: &Array2<T>) -> T {
    a.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Real>(a: &Array2<T>, b: &Array2<T>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| *x * *y).sum()
}

/// Largest eigenvalue of `Gamma^T Gamma` by power iteration, inflated by 1%.
pub(crate) fn power_iteration<T: Real>(
    apply: impl Fn(&Array2<T>) -> Array2<T>,
    adjoint: impl Fn(&Array2<T>) -> Array2<T>,
    shape: (usize, usize),
    iters: usize,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = Array2::from_shape_fn(shape, |_| T::lit(rng.random::<f64>() - 0.5));
    let mut lambda = T::zero();
    for _ in 0..iters {
        let n = norm(&x);
        if n == T::zero() {
            return T::zero();
        }
        x.mapv_inplace(|v| v / n);
        let y = adjoint(&apply(&x));
        lambda = dot(&x, &y);
        x = y;
    }
    lambda * T::lit(1.01)
}

/// Scales a minimal-norm correction `delta` (with `Gamma delta = r`) so the
/// result lands on the boundary of the `eps` ball.
pub(crate) fn ball_step<T: Real>(u: &Array2<T>, delta: Array2<T>, residual_norm: T, eps: T) -> Array2<T> {
    let scale = if residual_norm > T::zero() {
        T::one() - eps / residual_norm
    } else {
        T::one()
    };
    u + &delta.mapv(|v| v * scale)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Dot-test ratio `|<Gx, y> - <x, G^T y>| / (||Gx|| ||y||)`.
    pub fn dot_test<T: Real>(op: &dyn ForwardOperator<T>, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn(op.image_shape(), |_| T::lit(rng.random::<f64>() - 0.5));
        let y = Array2::from_shape_fn(op.measurement_shape(), |_| T::lit(rng.random::<f64>() - 0.5));
        let gx = op.apply(&x).unwrap();
        let gty = op.adjoint(&y).unwrap();
        let lhs = dot(&gx, &y).to_f64_lossy();
        let rhs = dot(&x, &gty).to_f64_lossy();
        (lhs - rhs).abs() / (norm(&gx).to_f64_lossy() * norm(&y).to_f64_lossy())
    }
}
