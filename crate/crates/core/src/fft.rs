//! Planned 2-D complex FFTs on row-major `ndarray` grids, plus the spectral
//! fold/tile pair that implements spatial subsampling and its adjoint.
//!
//! Convention: `forward` is the unnormalized DFT, `inverse` carries the
//! `1/(h*w)` factor, so `inverse(forward(x)) == x` and the product of two
//! spectra is circular convolution.

use crate::Real;
use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, a: &mut Array2<Complex<T>>) {
        self.run(a, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, a: &mut Array2<Complex<T>>) {
        self.run(a, &self.row_inv, &self.col_inv);
        let scale = T::one() / T::from_usize(self.height * self.width).unwrap();
        a.mapv_inplace(|v| v * scale);
    }

    pub fn forward_real(&self, x: ArrayView2<T>) -> Array2<Complex<T>> {
        let mut a = x.mapv(|v| Complex::new(v, T::zero()));
        self.forward(&mut a);
        a
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self, mut spec: Array2<Complex<T>>) -> Array2<T> {
        self.inverse(&mut spec);
        spec.mapv(|c| c.re)
    }

    fn run(&self, a: &mut Array2<Complex<T>>, row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        assert_eq!(a.dim(), (self.height, self.width), "FFT grid shape");
        if !a.is_standard_layout() {
            *a = a.as_standard_layout().to_owned();
        }
        let (h, w) = (self.height, self.width);
        let data = a.as_slice_mut().expect("standard layout");
        let scratch_len = row.get_inplace_scratch_len().max(col.get_inplace_scratch_len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        row.process_with_scratch(data, &mut scratch);

        let mut t = vec![Complex::new(T::zero(), T::zero()); h * w];
        transpose(data, &mut t, h, w);
        col.process_with_scratch(&mut t, &mut scratch);
        transpose(&t, data, w, h);
    }
}

/// `dst` (cols x rows) <- transpose of `src` (rows x cols).
fn transpose<C: Copy>(src: &[C], dst: &mut [C], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Spectrum of `x[s*m]` (spatial subsampling by `stride` on both axes),
/// computed from the spectrum of `x` by aliasing: returns the
/// `(h/stride, w/stride)` spectrum, already scaled so that an inverse FFT of
/// that size yields the subsampled field.
pub fn fold<T: Real>(spec: &Array2<Complex<T>>, stride: usize) -> Array2<Complex<T>> {
    let (h, w) = spec.dim();
    let (sh, sw) = (h / stride, w / stride);
    let mut out = Array2::from_elem((sh, sw), Complex::new(T::zero(), T::zero()));
    for r in 0..h {
        let rr = r % sh;
        for c in 0..w {
            out[[rr, c % sw]] += spec[[r, c]];
        }
    }
    let scale = T::one() / T::from_usize(stride * stride).unwrap();
    out.mapv_inplace(|v| v * scale);
    out
}

/// Adjoint companion of [`fold`]: the spectrum of the zero-inserted
/// upsampling of a field whose `(h/stride, w/stride)` spectrum is `small`.
pub fn tile<T: Real>(small: &Array2<Complex<T>>, h: usize, w: usize) -> Array2<Complex<T>> {
    let (sh, sw) = small.dim();
    Array2::from_shape_fn((h, w), |(r, c)| small[[r % sh, c % sw]])
}

/// Signed DFT frequency in radians/sample for index `k` of an `n`-point grid.
/// The Nyquist bin of an even grid maps to `-pi`.
pub fn angular_frequency(k: usize, n: usize) -> f64 {
    let kk = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * std::f64::consts::PI * kk / n as f64
}

/// Index of `-k` on an `n`-point DFT grid.
#[inline]
pub fn neg_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn naive_dft(x: &Array2<Complex<f64>>) -> Array2<Complex<f64>> {
        let (h, w) = x.dim();
        Array2::from_shape_fn((h, w), |(kr, kc)| {
            let mut acc = Complex::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let ph = -2.0 * std::f64::consts::PI * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
                    acc += x[[r, c]] * Complex::from_polar(1.0, ph);
                }
            }
            acc
        })
    }

    #[test]
    fn matches_naive_dft_on_rectangle() {
        let x = Array2::from_shape_fn((4, 8), |(r, c)| {
            Complex::new((r * 3 + c) as f64 * 0.1, (r as f64 - c as f64).sin())
        });
        let mut y = x.clone();
        Fft2::new(4, 8).forward(&mut y);
        let z = naive_dft(&x);
        for (a, b) in y.iter().zip(z.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let x = Array2::from_shape_fn((8, 8), |(r, c)| Complex::new((r * c) as f64, 1.0));
        let f = Fft2::new(8, 8);
        let mut y = x.clone();
        f.forward(&mut y);
        f.inverse(&mut y);
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fold_is_spectral_subsampling() {
        let x = Array2::from_shape_fn((16, 16), |(r, c)| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let f = Fft2::<f64>::new(16, 16);
        let spec = f.forward_real(x.view());
        let small = Fft2::<f64>::new(4, 4).inverse_real(fold(&spec, 4));
        for r in 0..4 {
            for c in 0..4 {
                assert!((small[[r, c]] - x[[4 * r, 4 * c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tile_is_zero_insertion() {
        let c = Array2::from_shape_fn((2, 2), |(r, c)| (1 + r * 2 + c) as f64);
        let small = Fft2::<f64>::new(2, 2).forward_real(c.view());
        let up = Fft2::<f64>::new(8, 8).inverse_real(tile(&small, 8, 8));
        for r in 0..8 {
            for cc in 0..8 {
                let expect = if r % 4 == 0 && cc % 4 == 0 {
                    c[[r / 4, cc / 4]]
                } else {
                    0.0
                };
                assert!((up[[r, cc]] - expect).abs() < 1e-12, "{r},{cc}");
            }
        }
    }

    #[test]
    fn nyquist_maps_to_minus_pi() {
        assert_eq!(angular_frequency(4, 8), -std::f64::consts::PI);
        assert_eq!(angular_frequency(1, 8), std::f64::consts::PI / 4.0);
        assert_eq!(neg_index(0, 8), 0);
        assert_eq!(neg_index(3, 8), 5);
    }
}
