//! Lowpass filtering followed by decimation, `Gamma = S H`.
//!
//! `H` is diagonal in frequency. The ideal kernel keeps `|k| < n/2` on each
//! axis of the `n = N/factor` low-resolution grid (the low-resolution Nyquist
//! bin is dropped, so `H` is a real, even, idempotent mask). The Gaussian
//! kernel is a periodized Gaussian with unit DC gain.
//!
//! Projections use the closed form `u + Gamma^T (Gamma Gamma^T)^+ (y - Gamma u)`;
//! `Gamma Gamma^T` is circulant on the low-resolution grid with eigenvalues
//! `factor^-2 sum_l h^2(k + l n)`. For the ideal mask this reduces to
//! `factor^2 H S^T y + (I - H) u`.

use super::{ball_step, norm, ForwardOperator};
use crate::error::{Error, Result};
use crate::fft::{angular_frequency, fold, tile, Fft2};
use crate::filterbank::periodized_gaussian;
use crate::Real;
use ndarray::{Array2, Zip};
use num_complex::Complex;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SrKernel {
    Ideal,
    /// Spatial standard deviation in high-resolution pixels.
    Gaussian {
        sigma: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Decimation<T: Real> {
    height: usize,
    width: usize,
    factor: usize,
    kernel: SrKernel,
    mask: Array2<T>,
    /// Pseudo-inverse of the eigenvalues of `Gamma Gamma^T` (low-res grid).
    gram_pinv: Array2<T>,
    lipschitz: T,
    fft: Fft2<T>,
    fft_small: Fft2<T>,
}

impl<T: Real> Decimation<T> {
    pub fn new(height: usize, width: usize, factor: usize, kernel: SrKernel) -> Result<Self> {
        if factor == 0 || height % factor != 0 || width % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "decimation factor {factor} does not divide {height}x{width}"
            )));
        }
        if let SrKernel::Gaussian { sigma } = kernel {
            if !(sigma > 0.0) {
                return Err(Error::InvalidArgument(format!("gaussian sigma {sigma} must be > 0")));
            }
        }
        let (sh, sw) = (height / factor, width / factor);
        let mask = Array2::from_shape_fn((height, width), |(r, c)| match kernel {
            SrKernel::Ideal => {
                let inside = |k: usize, n: usize, m: usize| {
                    let s = if k < n.div_ceil(2) {
                        k as i64
                    } else {
                        k as i64 - n as i64
                    };
                    2 * s.unsigned_abs() < m as u64
                };
                if inside(r, height, sh) && inside(c, width, sw) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            SrKernel::Gaussian { sigma } => {
                let g = periodized_gaussian(angular_frequency(r, height), angular_frequency(c, width), sigma)
                    / periodized_gaussian(0.0, 0.0, sigma);
                T::lit(g)
            }
        });
        let sq = mask.mapv(|v| Complex::new(v * v, T::zero()));
        let gram = fold(&sq, factor).mapv(|c| c.re);
        let gmax = gram.iter().copied().fold(T::zero(), T::max);
        let tol = gmax * T::lit(1e-12);
        let gram_pinv = gram.mapv(|g| if g > tol { T::one() / g } else { T::zero() });
        Ok(Self {
            height,
            width,
            factor,
            kernel,
            mask,
            gram_pinv,
            lipschitz: gmax,
            fft: Fft2::new(height, width),
            fft_small: Fft2::new(sh, sw),
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn kernel(&self) -> SrKernel {
        self.kernel
    }

    /// Frequency response of `H`.
    pub fn mask(&self) -> &Array2<T> {
        &self.mask
    }

    /// `H x`.
    pub fn lowpass(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_image(x)?;
        let mut s = self.fft.forward_real(x.view());
        Zip::from(&mut s).and(&self.mask).for_each(|v, m| *v = *v * *m);
        Ok(self.fft.inverse_real(s))
    }

    /// `Gamma^T (Gamma Gamma^T)^+ r`.
    fn min_norm_correction(&self, r: &Array2<T>) -> Array2<T> {
        let mut rs = self.fft_small.forward_real(r.view());
        Zip::from(&mut rs).and(&self.gram_pinv).for_each(|v, g| *v = *v * *g);
        let mut up = tile(&rs, self.height, self.width);
        Zip::from(&mut up).and(&self.mask).for_each(|v, m| *v = *v * *m);
        self.fft.inverse_real(up)
    }
}

impl<T: Real> ForwardOperator<T> for Decimation<T> {
    fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn measurement_shape(&self) -> (usize, usize) {
        (self.height / self.factor, self.width / self.factor)
    }

    fn apply(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_image(x)?;
        let mut s = self.fft.forward_real(x.view());
        Zip::from(&mut s).and(&self.mask).for_each(|v, m| *v = *v * *m);
        Ok(self.fft_small.inverse_real(fold(&s, self.factor)))
    }

    fn adjoint(&self, y: &Array2<T>) -> Result<Array2<T>> {
        self.check_measurement(y)?;
        let small = self.fft_small.forward_real(y.view());
        let mut up = tile(&small, self.height, self.width);
        Zip::from(&mut up).and(&self.mask).for_each(|v, m| *v = *v * *m);
        Ok(self.fft.inverse_real(up))
    }

    fn project_measurements(&self, u: &Array2<T>, y: &Array2<T>, eps: T) -> Result<Array2<T>> {
        self.check_measurement(y)?;
        let r = y - &self.apply(u)?;
        let rn = norm(&r);
        if rn <= eps {
            return Ok(u.clone());
        }
        Ok(ball_step(u, self.min_norm_correction(&r), rn, eps))
    }

    fn right_inverse(&self, y: &Array2<T>) -> Result<Array2<T>> {
        self.check_measurement(y)?;
        Ok(self.min_norm_correction(y))
    }

    fn lipschitz(&self) -> T {
        self.lipschitz
    }
}

/// `S H x` for a one-off call.
pub fn sr_apply<T: Real>(x: &Array2<T>, factor: usize, kernel: SrKernel) -> Result<Array2<T>> {
    let (h, w) = x.dim();
    Decimation::new(h, w, factor, kernel)?.apply(x)
}

pub fn sr_project_measurements<T: Real>(
    z: &Array2<T>,
    y: &Array2<T>,
    factor: usize,
    kernel: SrKernel,
    eps: T,
) -> Result<Array2<T>> {
    let (h, w) = z.dim();
    Decimation::new(h, w, factor, kernel)?.project_measurements(z, y, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::testing::dot_test;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random::<f64>())
    }

    #[test]
    fn constant_preserved() {
        for kernel in [SrKernel::Ideal, SrKernel::Gaussian { sigma: 1.5 }] {
            let y: Array2<f64> = sr_apply(&Array2::from_elem((32, 32), 0.4), 4, kernel).unwrap();
            assert_eq!(y.dim(), (8, 8));
            assert!(y.iter().all(|v| (v - 0.4).abs() < 1e-12));
        }
    }

    #[test]
    fn factor_16_on_256() {
        let y = sr_apply(&random(256, 256, 1), 16, SrKernel::Ideal).unwrap();
        assert_eq!(y.dim(), (16, 16));
    }

    #[test]
    fn nyquist_checkerboard_annihilated() {
        let x: Array2<f64> = Array2::from_shape_fn((16, 16), |(r, c)| if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
        let y: Array2<f64> = sr_apply(&x, 2, SrKernel::Ideal).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn non_divisible_factor_rejected() {
        assert!(Decimation::<f64>::new(30, 32, 4, SrKernel::Ideal).is_err());
    }

    #[test]
    fn adjoint_dot_test() {
        for kernel in [SrKernel::Ideal, SrKernel::Gaussian { sigma: 2.0 }] {
            let op = Decimation::<f64>::new(32, 16, 4, kernel).unwrap();
            for seed in 0..20 {
                assert!(dot_test(&op, seed) < 1e-10);
            }
        }
    }

    #[test]
    fn ideal_projection_closed_form() {
        let op = Decimation::<f64>::new(32, 32, 4, SrKernel::Ideal).unwrap();
        let x = random(32, 32, 2);
        let y = op.apply(&x).unwrap();
        let z = random(32, 32, 3);
        let p = op.project_measurements(&z, &y, 0.0).unwrap();
        let expected = op.adjoint(&y).unwrap().mapv(|v| 16.0 * v) + &z - &op.lowpass(&z).unwrap();
        for (a, b) in p.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = &op.apply(&p).unwrap() - &y;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let pp = op.project_measurements(&p, &y, 0.0).unwrap();
        assert!((&pp - &p).iter().all(|v| v.abs() < 1e-12));
        let consistent = op.project_measurements(&x, &y, 0.0).unwrap();
        assert!((&consistent - &x).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_start_gives_lowpass_of_original() {
        let op = Decimation::<f64>::new(32, 32, 4, SrKernel::Ideal).unwrap();
        let x = random(32, 32, 4);
        let y = op.apply(&x).unwrap();
        let p = op.project_measurements(&Array2::zeros((32, 32)), &y, 0.0).unwrap();
        let hx = op.lowpass(&x).unwrap();
        assert!((&p - &hx).iter().all(|v| v.abs() < 1e-12));
        let ri = op.right_inverse(&y).unwrap();
        assert!((&ri - &hx).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gaussian_projection_lands_in_ball() {
        let op = Decimation::<f64>::new(32, 32, 4, SrKernel::Gaussian { sigma: 2.0 }).unwrap();
        let y = op.apply(&random(32, 32, 5)).unwrap();
        let z = random(32, 32, 6);
        for eps in [0.0, 0.05] {
            let p = op.project_measurements(&z, &y, eps).unwrap();
            let d = norm(&(&op.apply(&p).unwrap() - &y));
            assert!(d <= eps + 1e-10, "{d}");
        }
    }

    #[test]
    fn lipschitz_matches_power_iteration() {
        let op = Decimation::<f64>::new(16, 16, 2, SrKernel::Gaussian { sigma: 1.0 }).unwrap();
        let est =
            super::super::power_iteration(|x| op.apply(x).unwrap(), |y| op.adjoint(y).unwrap(), (16, 16), 200) / 1.01;
        assert!((est - op.lipschitz()).abs() < 1e-6 * op.lipschitz());
    }
}
