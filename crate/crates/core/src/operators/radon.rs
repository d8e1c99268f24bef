//! Parallel-beam Radon transform on square images.
//!
//! Pixel `(r, c)` sits at `(x, y) = (c - (N-1)/2, r - (N-1)/2)`. The ray at
//! angle `theta` and offset `t` is `{t (cos, sin) + s (-sin, cos)}`; line
//! integrals are Riemann sums with step 1/2 over the bilinear interpolant of
//! the image (zero outside). Detectors sit at integer offsets covering the
//! image diagonal. The operator is stored as a sparse row matrix, so the
//! adjoint uses exactly the same weights.

use super::{dot, norm, power_iteration, ForwardOperator};
use crate::error::{shape_mismatch, Error, Result};
use crate::Real;
use ndarray::Array2;

const RAY_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram<T: Real> {
    /// Projection angles in degrees, strictly increasing in `[0, 180)`.
    pub angles: Vec<f64>,
    /// Detector offsets in pixels.
    pub offsets: Vec<f64>,
    /// `angles.len() x offsets.len()` line integrals.
    pub values: Array2<T>,
}

/// Iteration limits for the constrained right inverse and the measurement
/// projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadonSettings {
    pub right_inverse_iters: usize,
    /// Early stop once `||Gamma z - y|| / ||y||` falls below this.
    pub right_inverse_tol: f64,
    pub projection_iters: usize,
    /// Stop the null-space projection once `||Gamma d||` falls below this
    /// fraction of `||Gamma g||`.
    pub nullspace_tol: f64,
}

impl Default for RadonSettings {
    fn default() -> Self {
        Self {
            right_inverse_iters: 500,
            right_inverse_tol: 1e-4,
            projection_iters: 500,
            nullspace_tol: 1e-2,
        }
    }
}

/// Result of the box-constrained least-squares solve.
#[derive(Clone, Debug)]
pub struct RightInverse<T: Real> {
    pub image: Array2<T>,
    /// `||Gamma z - y||`.
    pub residual: T,
    pub iterations: usize,
    /// Objective `1/2 ||Gamma z - y||^2` after each iteration.
    pub history: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Radon<T: Real> {
    size: usize,
    angles: Vec<f64>,
    offsets: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<T>,
    lipschitz: T,
    pub settings: RadonSettings,
}

impl<T: Real> Radon<T> {
    pub fn new(size: usize, angles: &[f64]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidArgument("empty angle list".into()));
        }
        if size == 0 {
            return Err(Error::InvalidArgument("zero image size".into()));
        }
        if angles.iter().any(|a| !(0.0..180.0).contains(a)) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "angles must increase strictly within [0, 180)".into(),
            ));
        }
        let half = (size as f64 / 2.0 + 1.0) * std::f64::consts::SQRT_2;
        let n_off = 2 * half.ceil() as usize + 1;
        let offsets: Vec<f64> = (0..n_off).map(|i| i as f64 - (n_off - 1) as f64 / 2.0).collect();
        let centre = (size as f64 - 1.0) / 2.0;
        let m = (half / RAY_STEP).ceil() as i64;

        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for &deg in angles {
            let th = deg.to_radians();
            let (cs, sn) = (th.cos(), th.sin());
            for &t in &offsets {
                entries.clear();
                for step in -m..=m {
                    let s = step as f64 * RAY_STEP;
                    let col = t * cs - s * sn + centre;
                    let row = t * sn + s * cs + centre;
                    let (c0, r0) = (col.floor(), row.floor());
                    let (fc, fr) = (col - c0, row - r0);
                    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                            let (rr, cc) = (r0 as i64 + dr, c0 as i64 + dc);
                            let w = wr * wc * RAY_STEP;
                            if w > 0.0 && (0..size as i64).contains(&rr) && (0..size as i64).contains(&cc) {
                                entries.push(((rr as usize * size + cc as usize) as u32, w));
                            }
                        }
                    }
                }
                entries.sort_unstable_by_key(|e| e.0);
                let mut last = u32::MAX;
                for &(idx, w) in entries.iter() {
                    if idx == last {
                        *weights.last_mut().unwrap() += T::lit(w);
                    } else {
                        cols.push(idx);
                        weights.push(T::lit(w));
                        last = idx;
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        let mut op = Self {
            size,
            angles: angles.to_vec(),
            offsets,
            row_ptr,
            cols,
            weights,
            lipschitz: T::zero(),
            settings: RadonSettings::default(),
        };
        op.lipschitz = power_iteration(|x| op.forward(x), |y| op.backward(y), (size, size), 100);
        Ok(op)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        let n_rows = self.row_ptr.len() - 1;
        let mut out = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = T::zero();
            for (c, w) in self.cols[a..b].iter().zip(&self.weights[a..b]) {
                acc += *w * xs[*c as usize];
            }
            out.push(acc);
        }
        Array2::from_shape_vec((self.angles.len(), self.offsets.len()), out).expect("sinogram shape")
    }

    fn backward(&self, y: &Array2<T>) -> Array2<T> {
        let mut out = vec![T::zero(); self.size * self.size];
        for (r, v) in y.iter().enumerate() {
            if *v == T::zero() {
                continue;
            }
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for (c, w) in self.cols[a..b].iter().zip(&self.weights[a..b]) {
                out[*c as usize] += *w * *v;
            }
        }
        Array2::from_shape_vec((self.size, self.size), out).expect("image shape")
    }

    pub fn sinogram(&self, x: &Array2<T>) -> Result<Sinogram<T>> {
        Ok(Sinogram {
            angles: self.angles.clone(),
            offsets: self.offsets.clone(),
            values: self.apply(x)?,
        })
    }

    /// Monotone FISTA on `1/2 ||Gamma z - y||^2` over the box `[0, 1]`.
    pub fn right_inverse_with(&self, y: &Array2<T>, iters: usize, tol: f64) -> Result<RightInverse<T>> {
        self.check_measurement(y)?;
        let ynorm = norm(y);
        let zeros = Array2::<T>::zeros((self.size, self.size));
        let half = T::lit(0.5);
        let step = T::one() / self.lipschitz.max(T::min_positive_value());
        let mut z = zeros.clone();
        let mut gz = Array2::<T>::zeros(y.dim());
        let mut fz = half * ynorm * ynorm;
        let mut w = z.clone();
        let mut gw = gz.clone();
        let mut t = T::one();
        let mut history = Vec::new();
        let mut done = 0;
        for it in 0..iters {
            if ynorm == T::zero() || (fz * T::lit(2.0)).sqrt().to_f64_lossy() <= tol * ynorm.to_f64_lossy() {
                break;
            }
            done = it + 1;
            let grad = self.backward(&(&gw - y));
            let v = (&w - &grad.mapv(|g| g * step)).mapv(|u| u.max(T::zero()).min(T::one()));
            let gv = self.forward(&v);
            let fv = half * norm(&(&gv - y)).powi(2);
            let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * half;
            let (z_next, gz_next, fz_next) = if fv <= fz {
                (v.clone(), gv.clone(), fv)
            } else {
                (z.clone(), gz.clone(), fz)
            };
            let a = t / t_next;
            let b = (t - T::one()) / t_next;
            w = &z_next + &(&v - &z_next).mapv(|d| d * a) + &(&z_next - &z).mapv(|d| d * b);
            gw = &gz_next + &(&gv - &gz_next).mapv(|d| d * a) + &(&gz_next - &gz).mapv(|d| d * b);
            z = z_next;
            gz = gz_next;
            fz = fz_next;
            t = t_next;
            history.push(fz);
        }
        let residual = norm(&(&self.forward(&z) - y));
        Ok(RightInverse {
            image: z,
            residual,
            iterations: done,
            history,
        })
    }

    /// Minimal-norm correction by CGLS on `Gamma delta = y - Gamma u`, stopped
    /// once the residual is within `eps` (or a tiny floor relative to `y`).
    fn cg_projection(&self, u: &Array2<T>, y: &Array2<T>, eps: T) -> Array2<T> {
        let r0 = y - &self.forward(u);
        if norm(&r0) <= eps {
            return u.clone();
        }
        u + &self.cg_correction(r0, eps.max(T::lit(1e-10) * norm(y)))
    }

    /// CGLS for `Gamma delta = r0` from `delta = 0` (so `delta` stays in the
    /// row space), stopped once `||r0 - Gamma delta|| <= floor`. Returns the
    /// best iterate.
    fn cg_correction(&self, r0: Array2<T>, floor: T) -> Array2<T> {
        let mut delta = Array2::<T>::zeros((self.size, self.size));
        let mut q = self.backward(&r0);
        let mut best = (norm(&r0), delta.clone());
        let mut s = r0;
        let mut p = q.clone();
        let mut gamma = dot(&q, &q);
        for _ in 0..self.settings.projection_iters {
            if gamma == T::zero() {
                break;
            }
            let tp = self.forward(&p);
            let tt = dot(&tp, &tp);
            if tt == T::zero() {
                break;
            }
            let alpha = gamma / tt;
            delta.scaled_add(alpha, &p);
            s.scaled_add(-alpha, &tp);
            let sn = norm(&s);
            if sn < best.0 {
                best = (sn, delta.clone());
            }
            if sn <= floor {
                break;
            }
            q = self.backward(&s);
            let gamma_next = dot(&q, &q);
            let beta = gamma_next / gamma;
            gamma = gamma_next;
            p = &q + &p.mapv(|v| v * beta);
        }
        best.1
    }
}

impl<T: Real> ForwardOperator<T> for Radon<T> {
    fn image_shape(&self) -> (usize, usize) {
        (self.size, self.size)
    }

    fn measurement_shape(&self) -> (usize, usize) {
        (self.angles.len(), self.offsets.len())
    }

    fn apply(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_image(x)?;
        Ok(self.forward(x))
    }

    fn adjoint(&self, y: &Array2<T>) -> Result<Array2<T>> {
        self.check_measurement(y)?;
        Ok(self.backward(y))
    }

    fn project_measurements(&self, u: &Array2<T>, y: &Array2<T>, eps: T) -> Result<Array2<T>> {
        self.check_image(u)?;
        self.check_measurement(y)?;
        Ok(self.cg_projection(u, y, eps))
    }

    /// Approximate: CGLS removes the row-space part down to
    /// `settings.nullspace_tol` of `||Gamma g||`. The solver projects each
    /// trial point onto the measurement set, so a rough direction suffices.
    fn project_nullspace(&self, g: &Array2<T>) -> Result<Array2<T>> {
        self.check_image(g)?;
        let r0 = self.forward(g).mapv(|v| -v);
        let floor = T::lit(self.settings.nullspace_tol) * norm(&r0);
        Ok(g + &self.cg_correction(r0, floor))
    }

    fn right_inverse(&self, y: &Array2<T>) -> Result<Array2<T>> {
        Ok(self
            .right_inverse_with(y, self.settings.right_inverse_iters, self.settings.right_inverse_tol)?
            .image)
    }

    fn lipschitz(&self) -> T {
        self.lipschitz
    }
}

pub fn radon_apply<T: Real>(x: &Array2<T>, angles: &[f64]) -> Result<Sinogram<T>> {
    let (h, w) = x.dim();
    if h != w {
        return Err(shape_mismatch((h, h), (h, w)));
    }
    Radon::new(h, angles)?.sinogram(x)
}

pub fn radon_adjoint<T: Real>(s: &Sinogram<T>, size: usize) -> Result<Array2<T>> {
    let op = Radon::new(size, &s.angles)?;
    if s.offsets.len() != op.offsets.len() {
        return Err(shape_mismatch(op.offsets.len(), s.offsets.len()));
    }
    op.adjoint(&s.values)
}

pub fn radon_right_inverse<T: Real>(s: &Sinogram<T>, size: usize, iters: usize) -> Result<RightInverse<T>> {
    let op = Radon::new(size, &s.angles)?;
    op.right_inverse_with(&s.values, iters, 0.0)
}
