//! Order 0/1/2 scattering coefficients and their vector-Jacobian product.
//!
//! Coefficients are lowpass averages subsampled at stride `2^J` and stored
//! path-major: one `(h/2^J) x (w/2^J)` block per path, in the order returned
//! by [`path_index`].
//!
//! The forward pass uses the exact modulus. Gradients use the smoothed
//! modulus `|z|_mu = sqrt(|z|^2 + mu^2)` with `mu = mu_rel * mean(x^2)`; the
//! factor `z/|z|_mu` is taken as zero where `|z|_mu == 0`.

use crate::error::{shape_mismatch, Error, Result};
use crate::fft::{fold, tile};
use crate::filterbank::FilterBank;
use crate::Real;
use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex;
use std::fmt;
use std::str::FromStr;

/// Default relative modulus smoothing.
pub const DEFAULT_MU_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Path {
    Zero,
    First { j: usize, k: usize },
    Second { j: usize, k: usize, j2: usize, k2: usize },
}

impl Path {
    pub fn order(&self) -> usize {
        match self {
            Path::Zero => 0,
            Path::First { .. } => 1,
            Path::Second { .. } => 2,
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Zero => write!(f, "0"),
            Path::First { j, k } => write!(f, "1:{j}:{k}"),
            Path::Second { j, k, j2, k2 } => write!(f, "2:{j}:{k}:{j2}:{k2}"),
        }
    }
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad path descriptor {s:?}")))?;
        match parts.as_slice() {
            [0] => Ok(Path::Zero),
            [1, j, k] => Ok(Path::First { j: *j, k: *k }),
            [2, j, k, j2, k2] => Ok(Path::Second {
                j: *j,
                k: *k,
                j2: *j2,
                k2: *k2,
            }),
            _ => Err(Error::Format(format!("bad path descriptor {s:?}"))),
        }
    }
}

/// Canonical path list: order, then `j, k, j', k'` lexicographic, with
/// `j' > j` for second order.
pub fn path_index<T: Real>(fb: &FilterBank<T>, max_order: usize) -> Vec<Path> {
    paths_for(fb.scales(), fb.orientations(), max_order)
}

pub(crate) fn paths_for(scales: usize, orientations: usize, max_order: usize) -> Vec<Path> {
    let mut out = vec![Path::Zero];
    if max_order >= 1 {
        for j in 1..=scales {
            for k in 1..=orientations {
                out.push(Path::First { j, k });
            }
        }
    }
    if max_order >= 2 {
        for j in 1..=scales {
            for k in 1..=orientations {
                for j2 in j + 1..=scales {
                    for k2 in 1..=orientations {
                        out.push(Path::Second { j, k, j2, k2 });
                    }
                }
            }
        }
    }
    out
}

/// Closed-form path count `1 + JK + K^2 J(J-1)/2` (truncated by order).
pub fn path_count(scales: usize, orientations: usize, max_order: usize) -> usize {
    let mut n = 1;
    if max_order >= 1 {
        n += scales * orientations;
    }
    if max_order >= 2 {
        n += orientations * orientations * scales * (scales.saturating_sub(1)) / 2;
    }
    n
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringVector<T: Real> {
    pub values: Vec<T>,
    pub paths: Vec<Path>,
    pub spatial_stride: usize,
    /// `(height, width)` of the source image.
    pub source_shape: (usize, usize),
    pub scales: usize,
    pub orientations: usize,
    pub max_order: usize,
}

impl<T: Real> ScatteringVector<T> {
    /// `(height, width)` of each per-path block.
    pub fn block_shape(&self) -> (usize, usize) {
        (
            self.source_shape.0 / self.spatial_stride,
            self.source_shape.1 / self.spatial_stride,
        )
    }

    pub fn block_len(&self) -> usize {
        let (h, w) = self.block_shape();
        h * w
    }

    pub fn block(&self, p: usize) -> ArrayView2<'_, T> {
        let n = self.block_len();
        ArrayView2::from_shape(self.block_shape(), &self.values[p * n..(p + 1) * n]).expect("block layout")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn scatter<T: Real>(x: &Array2<T>, fb: &FilterBank<T>, max_order: usize) -> Result<ScatteringVector<T>> {
    let engine = Engine::new(fb, max_order)?;
    let values = engine.run(x, T::zero(), false, |_, _, _| {})?.0;
    Ok(engine.wrap(values))
}

/// `grad_x <Phi x, cotangent>` with the default smoothing.
pub fn scatter_vjp<T: Real>(x: &Array2<T>, fb: &FilterBank<T>, max_order: usize, cotangent: &[T]) -> Result<Array2<T>> {
    scatter_vjp_with(x, fb, max_order, cotangent, DEFAULT_MU_REL)
}

pub fn scatter_vjp_with<T: Real>(
    x: &Array2<T>,
    fb: &FilterBank<T>,
    max_order: usize,
    cotangent: &[T],
    mu_rel: f64,
) -> Result<Array2<T>> {
    let engine = Engine::new(fb, max_order)?;
    let expected = engine.paths.len() * engine.block_len;
    if cotangent.len() != expected {
        return Err(shape_mismatch(expected, cotangent.len()));
    }
    let bl = engine.block_len;
    let (_, grad) = engine.run(x, engine.mu(x, mu_rel), true, |p, _, cot| {
        cot.copy_from_slice(&cotangent[p * bl..(p + 1) * bl]);
    })?;
    Ok(grad.expect("gradient requested"))
}

/// Value and gradient of `f(x) = ||Phi x - target||^2`.
#[derive(Clone, Debug)]
pub struct Objective<T: Real> {
    pub value: T,
    pub gradient: Array2<T>,
    pub coefficients: Vec<T>,
}

/// Fused evaluation of `||Phi x - target||^2` and its gradient in one pass.
pub fn objective_and_gradient<T: Real>(
    x: &Array2<T>,
    fb: &FilterBank<T>,
    max_order: usize,
    target: &[T],
    mu_rel: f64,
) -> Result<Objective<T>> {
    let engine = Engine::new(fb, max_order)?;
    let expected = engine.paths.len() * engine.block_len;
    if target.len() != expected {
        return Err(shape_mismatch(expected, target.len()));
    }
    let bl = engine.block_len;
    let two = T::lit(2.0);
    let mut value = T::zero();
    let (coefficients, grad) = engine.run(x, engine.mu(x, mu_rel), true, |p, vals, cot| {
        let t = &target[p * bl..(p + 1) * bl];
        for ((c, v), z) in cot.iter_mut().zip(vals).zip(t) {
            let d = *v - *z;
            value += d * d;
            *c = two * d;
        }
    })?;
    Ok(Objective {
        value,
        gradient: grad.expect("gradient requested"),
        coefficients,
    })
}

/// Value of `||Phi x - target||^2` without the gradient.
pub fn objective<T: Real>(x: &Array2<T>, fb: &FilterBank<T>, max_order: usize, target: &[T]) -> Result<T> {
    let phi = scatter(x, fb, max_order)?;
    if target.len() != phi.values.len() {
        return Err(shape_mismatch(phi.values.len(), target.len()));
    }
    Ok(phi.values.iter().zip(target).map(|(a, b)| (*a - *b) * (*a - *b)).sum())
}

type Spectrum<T> = Array2<Complex<T>>;

struct Engine<'a, T: Real> {
    fb: &'a FilterBank<T>,
    max_order: usize,
    paths: Vec<Path>,
    block_len: usize,
    stride: usize,
}

impl<'a, T: Real> Engine<'a, T> {
    fn new(fb: &'a FilterBank<T>, max_order: usize) -> Result<Self> {
        if max_order > 2 {
            return Err(Error::InvalidArgument(format!("max_order {max_order} > 2")));
        }
        let (sh, sw) = fb.subsampled_shape();
        Ok(Self {
            fb,
            max_order,
            paths: path_index(fb, max_order),
            block_len: sh * sw,
            stride: fb.stride(),
        })
    }

    fn wrap(&self, values: Vec<T>) -> ScatteringVector<T> {
        ScatteringVector {
            values,
            paths: self.paths.clone(),
            spatial_stride: self.stride,
            source_shape: (self.fb.height(), self.fb.width()),
            scales: self.fb.scales(),
            orientations: self.fb.orientations(),
            max_order: self.max_order,
        }
    }

    fn mu(&self, x: &Array2<T>, mu_rel: f64) -> T {
        let n = T::from_usize(x.len().max(1)).unwrap();
        T::lit(mu_rel) * x.iter().map(|v| *v * *v).sum::<T>() / n
    }

    /// Subsampled lowpass of a spectrum, written into `out`.
    fn average(&self, spec: &Spectrum<T>, out: &mut [T]) {
        let mut low = spec.clone();
        Zip::from(&mut low).and(self.fb.phi()).for_each(|s, f| *s = *s * *f);
        let small = self.fb.fft_sub().inverse_real(fold(&low, self.stride));
        for (o, v) in out.iter_mut().zip(small.iter()) {
            *o = *v;
        }
    }

    /// Adjoint of [`Self::average`]: spectrum of `phi * upsample(cot)`.
    fn average_adjoint(&self, cot: &[T], acc: &mut Spectrum<T>) {
        let (sh, sw) = self.fb.subsampled_shape();
        let small = Array2::from_shape_vec((sh, sw), cot.to_vec()).expect("block shape");
        let small = self.fb.fft_sub().forward_real(small.view());
        let up = tile(&small, self.fb.height(), self.fb.width());
        Zip::from(acc)
            .and(&up)
            .and(self.fb.phi())
            .for_each(|a, u, f| *a += *u * *f);
    }

    fn filtered(&self, spec: &Spectrum<T>, filt: &Array2<T>) -> Spectrum<T> {
        let mut w = spec.clone();
        Zip::from(&mut w).and(filt).for_each(|s, f| *s = *s * *f);
        self.fb.fft().inverse(&mut w);
        w
    }

    /// Forward pass, optionally interleaved with backpropagation.
    ///
    /// `cot_fn(path, values, cot)` is called once per path after its block is
    /// computed and must fill `cot` when gradients are requested.
    fn run(
        &self,
        x: &Array2<T>,
        mu: T,
        want_grad: bool,
        mut cot_fn: impl FnMut(usize, &[T], &mut [T]),
    ) -> Result<(Vec<T>, Option<Array2<T>>)> {
        let fb = self.fb;
        let (h, w) = (fb.height(), fb.width());
        if x.dim() != (h, w) {
            return Err(shape_mismatch((h, w), x.dim()));
        }
        let bl = self.block_len;
        let (nj, nk) = (fb.scales(), fb.orientations());
        let mut values = vec![T::zero(); self.paths.len() * bl];
        let mut cot = vec![T::zero(); bl];
        let zero = Complex::new(T::zero(), T::zero());
        let mut grad_x = want_grad.then(|| Array2::from_elem((h, w), zero));
        let mu2 = mu * mu;

        let xs = fb.fft().forward_real(x.view());
        self.average(&xs, &mut values[..bl]);
        cot_fn(0, &values[..bl], &mut cot);
        if let Some(g) = grad_x.as_mut() {
            self.average_adjoint(&cot, g);
        }
        if self.max_order == 0 {
            return Ok((values, grad_x.map(|g| fb.fft().inverse_real(g))));
        }

        let mut second = 1 + nj * nk;
        for j in 1..=nj {
            for k in 1..=nk {
                let p1 = fb.filter_index(j, k) + 1;
                let w1 = self.filtered(&xs, fb.psi(j, k));
                let u1 = w1.mapv(|z| Complex::new(z.norm(), T::zero()));
                let mut u1s = u1;
                fb.fft().forward(&mut u1s);
                let range = p1 * bl..(p1 + 1) * bl;
                self.average(&u1s, &mut values[range.clone()]);
                let mut grad_u1 = want_grad.then(|| Array2::from_elem((h, w), zero));
                cot_fn(p1, &values[range], &mut cot);
                if let Some(g) = grad_u1.as_mut() {
                    self.average_adjoint(&cot, g);
                }

                if self.max_order >= 2 {
                    for j2 in j + 1..=nj {
                        for k2 in 1..=nk {
                            let p2 = second;
                            second += 1;
                            let psi2 = fb.psi(j2, k2);
                            let w2 = self.filtered(&u1s, psi2);
                            let mut u2s = w2.mapv(|z| Complex::new(z.norm(), T::zero()));
                            fb.fft().forward(&mut u2s);
                            let range = p2 * bl..(p2 + 1) * bl;
                            self.average(&u2s, &mut values[range.clone()]);
                            cot_fn(p2, &values[range], &mut cot);
                            if let Some(gu1) = grad_u1.as_mut() {
                                let mut gu2 = Array2::from_elem((h, w), zero);
                                self.average_adjoint(&cot, &mut gu2);
                                fb.fft().inverse(&mut gu2);
                                let mut v2 = modulus_backward(&gu2, &w2, mu2);
                                fb.fft().forward(&mut v2);
                                Zip::from(gu1).and(&v2).and(psi2).for_each(|a, v, f| *a += *v * *f);
                            }
                        }
                    }
                }

                if let (Some(gx), Some(mut gu1)) = (grad_x.as_mut(), grad_u1) {
                    fb.fft().inverse(&mut gu1);
                    let mut v1 = modulus_backward(&gu1, &w1, mu2);
                    fb.fft().forward(&mut v1);
                    Zip::from(gx)
                        .and(&v1)
                        .and(fb.psi(j, k))
                        .for_each(|a, v, f| *a += *v * *f);
                }
            }
        }
        Ok((values, grad_x.map(|g| fb.fft().inverse_real(g))))
    }
}

/// `Re(g) * z / |z|_mu`, the pullback of a real cotangent through `|.|`.
fn modulus_backward<T: Real>(g: &Spectrum<T>, z: &Spectrum<T>, mu2: T) -> Spectrum<T> {
    let mut out = z.clone();
    Zip::from(&mut out).and(g).for_each(|o, gv| {
        let m = (o.norm_sqr() + mu2).sqrt();
        *o = if m > T::zero() {
            *o * (gv.re / m)
        } else {
            Complex::new(T::zero(), T::zero())
        };
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{build_filter_bank, WaveletShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank(n: usize, j: usize, k: usize) -> FilterBank<f64> {
        build_filter_bank(n, n, j, k, WaveletShape::default()).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| rng.random::<f64>())
    }

    #[test]
    fn path_counts() {
        let fb = bank(16, 2, 2);
        let p1 = path_index(&fb, 1);
        assert_eq!(
            p1,
            vec![
                Path::Zero,
                Path::First { j: 1, k: 1 },
                Path::First { j: 1, k: 2 },
                Path::First { j: 2, k: 1 },
                Path::First { j: 2, k: 2 }
            ]
        );
        let p2 = path_index(&fb, 2);
        assert_eq!(p2.iter().filter(|p| p.order() == 2).count(), 4);
        assert_eq!(paths_for(4, 6, 2).len(), 1 + 24 + 216);
        for (j, k) in [(1, 1), (3, 2), (4, 6), (5, 3)] {
            assert_eq!(paths_for(j, k, 2).len(), path_count(j, k, 2));
        }
        let mut sorted = p2.clone();
        sorted.sort();
        assert_eq!(sorted, p2);
    }

    #[test]
    fn path_text_round_trip() {
        for p in paths_for(3, 2, 2) {
            assert_eq!(p.to_string().parse::<Path>().unwrap(), p);
        }
        assert!("3:1".parse::<Path>().is_err());
    }

    #[test]
    fn constant_image() {
        let fb = bank(32, 3, 4);
        let x = Array2::from_elem((32, 32), 0.7);
        let s = scatter(&x, &fb, 2).unwrap();
        assert_eq!(s.len(), path_count(3, 4, 2) * 16);
        for v in s.block(0).iter() {
            assert!((v - 0.7).abs() < 1e-12);
        }
        assert!(s.values[16..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn positive_homogeneity() {
        let fb = bank(32, 3, 4);
        let x = noise(32, 1);
        let a = scatter(&x, &fb, 2).unwrap();
        let b = scatter(&x.mapv(|v| 2.5 * v), &fb, 2).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((2.5 * u - v).abs() < 1e-10 * (1.0 + v.abs()));
        }
        assert!(a.values[16..].iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let fb = bank(16, 2, 4);
        let x = noise(16, 2);
        let n = path_count(2, 4, 2) * 16;
        let g = scatter_vjp(&x, &fb, 2, &vec![0.0; n]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn order_zero_gradient_is_linear_path() {
        let fb = bank(16, 2, 4);
        let x = Array2::from_elem((16, 16), 0.3);
        let n = path_count(2, 4, 1) * 16;
        let mut cot = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in cot[..16].iter_mut() {
            *c = rng.random::<f64>() - 0.5;
        }
        let g = scatter_vjp(&x, &fb, 1, &cot).unwrap();
        // Spatial phi by inverse DFT, correlated with the zero-inserted cotangent.
        let phi_sp = fb.fft().inverse_real(fb.phi().mapv(|v| Complex::new(v, 0.0)));
        for r in 0..16 {
            for c in 0..16 {
                let mut e = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        let (dr, dc) = ((r + 16 - 4 * a) % 16, (c + 16 - 4 * b) % 16);
                        e += cot[a * 4 + b] * phi_sp[[dr, dc]];
                    }
                }
                assert!((g[[r, c]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vjp_matches_central_differences() {
        let fb = bank(16, 2, 4);
        let n = path_count(2, 4, 2) * 16;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = Array2::from_shape_fn((16, 16), |_| rng.random::<f64>());
            let d = Array2::from_shape_fn((16, 16), |_| rng.random::<f64>() - 0.5);
            let cot: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let g = scatter_vjp(&x, &fb, 2, &cot).unwrap();
            let analytic: f64 = (&g * &d).sum();
            let h = 1e-5;
            let f = |s: f64| -> f64 {
                let v = scatter(&(&x + &d.mapv(|t| s * t)), &fb, 2).unwrap();
                v.values.iter().zip(&cot).map(|(a, b)| a * b).sum()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-4, "seed {seed}: analytic {analytic} fd {fd}");
        }
    }

    #[test]
    fn fused_objective_matches_parts() {
        let fb = bank(16, 2, 4);
        let x = noise(16, 5);
        let target = scatter(&noise(16, 6), &fb, 2).unwrap().values;
        let o = objective_and_gradient(&x, &fb, 2, &target, DEFAULT_MU_REL).unwrap();
        assert!((o.value - objective(&x, &fb, 2, &target).unwrap()).abs() < 1e-12);
        let cot: Vec<f64> = o.coefficients.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        let g = scatter_vjp(&x, &fb, 2, &cot).unwrap();
        for (a, b) in g.iter().zip(o.gradient.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn small_shift_near_invariance() {
        let fb = bank(64, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Smooth-ish texture: sum of random oriented cosines.
        let waves: Vec<(f64, f64, f64)> = (0..12)
            .map(|_| {
                (
                    rng.random::<f64>() * 1.5,
                    rng.random::<f64>() * 1.5,
                    rng.random::<f64>() * 6.0,
                )
            })
            .collect();
        let x = Array2::from_shape_fn((64, 64), |(r, c)| {
            waves
                .iter()
                .map(|(a, b, p)| ((a * r as f64 + b * c as f64) + p).cos())
                .sum::<f64>()
        });
        let shifted = Array2::from_shape_fn((64, 64), |(r, c)| x[[(r + 63) % 64, (c + 63) % 64]]);
        let a = scatter(&x, &fb, 2).unwrap().values;
        let b = scatter(&shifted, &fb, 2).unwrap().values;
        let num: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|u| u * u).sum::<f64>().sqrt();
        assert!(num / den < 0.1, "{}", num / den);
    }

    #[test]
    fn rejects_bad_shapes() {
        let fb = bank(16, 2, 4);
        assert!(scatter(&Array2::zeros((8, 16)), &fb, 2).is_err());
        assert!(scatter_vjp(&Array2::zeros((16, 16)), &fb, 2, &[0.0; 3]).is_err());
        assert!(scatter(&Array2::zeros((16, 16)), &fb, 3).is_err());
    }
}
