//! Affine minimum mean-square-error regression `X ~ G Z + h` from paired
//! sample ensembles.
//!
//! With `Structure::Shared`, vectors are read as path-major blocks
//! (`paths x positions`) and every spatial position is treated as one draw
//! of a `paths`-dimensional vector: moments are pooled over positions and a
//! single `paths x paths` regression is applied at each position.

use crate::error::{shape_mismatch, Error, Result};
use crate::linalg::Cholesky;
use crate::Real;
use ndarray::{Array1, Array2, Axis};
use num_traits::Float;

/// How coefficients are grouped when estimating moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    /// One covariance over the whole vector.
    Dense,
    /// Covariance pooled across `block_len` spatial positions.
    Shared { block_len: usize },
}

impl Structure {
    fn block_len(&self) -> usize {
        match self {
            Structure::Dense => 1,
            Structure::Shared { block_len } => *block_len,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentModel<T: Real> {
    pub mean_x: Array1<T>,
    pub mean_z: Array1<T>,
    pub k_xz: Array2<T>,
    pub k_zz: Array2<T>,
    pub ridge: T,
    pub n_samples: usize,
    pub structure: Structure,
    /// Centred draws (one per row), kept for the small-ensemble solve.
    centred_x: Array2<T>,
    centred_z: Array2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearEstimator<T: Real> {
    pub g: Array2<T>,
    pub h: Array1<T>,
    pub iteration_tag: usize,
    pub structure: Structure,
}

impl<T: Real> LinearEstimator<T> {
    /// `(dim_x, dim_z)` of the full vectors the estimator maps between.
    pub fn dims(&self) -> (usize, usize) {
        let b = self.structure.block_len();
        (self.g.nrows() * b, self.g.ncols() * b)
    }

    pub fn identity(dim: usize, structure: Structure) -> Self {
        let d = dim / structure.block_len();
        Self {
            g: Array2::eye(d),
            h: Array1::zeros(d),
            iteration_tag: 0,
            structure,
        }
    }
}

/// Stacks draws as rows; with sharing each position becomes its own row.
fn draws<T: Real>(samples: &[Vec<T>], structure: Structure) -> Result<Array2<T>> {
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(shape_mismatch(d, bad.len()));
    }
    match structure {
        Structure::Dense => {
            let flat: Vec<T> = samples.iter().flatten().copied().collect();
            Ok(Array2::from_shape_vec((samples.len(), d), flat).expect("rows"))
        }
        Structure::Shared { block_len } => {
            if block_len == 0 || d % block_len != 0 {
                return Err(Error::InvalidArgument(format!(
                    "length {d} is not a multiple of {block_len}"
                )));
            }
            let p = d / block_len;
            let mut out = Array2::zeros((samples.len() * block_len, p));
            for (i, s) in samples.iter().enumerate() {
                let v = Array2::from_shape_vec((p, block_len), s.clone()).expect("blocks");
                out.slice_mut(ndarray::s![i * block_len..(i + 1) * block_len, ..])
                    .assign(&v.t());
            }
            Ok(out)
        }
    }
}

/// Sample means and unbiased (co)variances. `ridge = None` selects
/// `1e-6 * trace(K_ZZ) / dim`, floored at machine epsilon times the mean
/// squared entry of `Z` so rounding noise in a degenerate ensemble does not
/// get amplified.
pub fn fit_moments<T: Real>(
    samples_x: &[Vec<T>],
    samples_z: &[Vec<T>],
    ridge: Option<T>,
    structure: Structure,
) -> Result<MomentModel<T>> {
    if samples_x.len() != samples_z.len() {
        return Err(shape_mismatch(samples_x.len(), samples_z.len()));
    }
    if samples_x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            samples_x.len()
        )));
    }
    let x = draws(samples_x, structure)?;
    let z = draws(samples_z, structure)?;
    let n = x.nrows();
    let mean_x = x.mean_axis(Axis(0)).expect("non-empty");
    let mean_z = z.mean_axis(Axis(0)).expect("non-empty");
    let xc = &x - &mean_x;
    let zc = &z - &mean_z;
    let denom = T::from_usize(n - 1).unwrap();
    let k_xz = xc.t().dot(&zc).mapv(|v| v / denom);
    let k_zz = zc.t().dot(&zc).mapv(|v| v / denom);
    let ridge = match ridge {
        Some(r) if r < T::zero() => return Err(Error::InvalidArgument("ridge must be >= 0".into())),
        Some(r) => r,
        None => {
            let dim = T::from_usize(k_zz.nrows().max(1)).unwrap();
            let energy = z.iter().map(|v| *v * *v).sum::<T>() / T::from_usize(z.len().max(1)).unwrap();
            (T::lit(1e-6) * k_zz.diag().sum() / dim)
                .max(T::epsilon() * energy)
                .max(T::min_positive_value().sqrt())
        }
    };
    Ok(MomentModel {
        mean_x,
        mean_z,
        k_xz,
        k_zz,
        ridge,
        n_samples: samples_x.len(),
        structure,
        centred_x: xc,
        centred_z: zc,
    })
}

/// `G = K_XZ (K_ZZ + ridge I)^-1`, `h = mean_X - G mean_Z`.
///
/// When there are fewer draws than dimensions the equivalent form
/// `Xc^T (Zc Zc^T + (n-1) ridge I)^-1 Zc` is solved instead.
pub fn fit_lmmse<T: Real>(mm: &MomentModel<T>, iteration_tag: usize) -> Result<LinearEstimator<T>> {
    let n = mm.centred_z.nrows();
    let dz = mm.k_zz.nrows();
    let g = if n < dz {
        let scaled = T::from_usize(n - 1).unwrap() * mm.ridge;
        let mut m = mm.centred_z.dot(&mm.centred_z.t());
        m.diag_mut().mapv_inplace(|v| v + scaled);
        let chol = Cholesky::new(&m).map_err(solve_error)?;
        let w = chol.solve_mat(&mm.centred_z);
        mm.centred_x.t().dot(&w)
    } else {
        let mut a = mm.k_zz.clone();
        a.diag_mut().mapv_inplace(|v| v + mm.ridge);
        let chol = Cholesky::new(&a).map_err(solve_error)?;
        chol.solve_mat(&mm.k_xz.t().to_owned()).t().to_owned()
    };
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure { row: 0 });
    }
    let h = &mm.mean_x - &g.dot(&mm.mean_z);
    Ok(LinearEstimator {
        g,
        h,
        iteration_tag,
        structure: mm.structure,
    })
}

fn solve_error(e: Error) -> Error {
    match e {
        Error::SingularCovariance { row, .. } => Error::SolveFailure { row },
        other => other,
    }
}

/// `G Z + h`.
pub fn apply_estimator<T: Real>(est: &LinearEstimator<T>, z: &[T]) -> Result<Vec<T>> {
    let (dx, dz) = est.dims();
    if z.len() != dz {
        return Err(shape_mismatch(dz, z.len()));
    }
    match est.structure {
        Structure::Dense => {
            let zv = ndarray::ArrayView1::from(z);
            Ok((est.g.dot(&zv) + &est.h).to_vec())
        }
        Structure::Shared { block_len } => {
            let zm = ndarray::ArrayView2::from_shape((est.g.ncols(), block_len), z).expect("blocks");
            let mut out = est.g.dot(&zm);
            for (mut row, h) in out.rows_mut().into_iter().zip(est.h.iter()) {
                row.mapv_inplace(|v| v + *h);
            }
            let v: Vec<T> = out.iter().copied().collect();
            debug_assert_eq!(v.len(), dx);
            Ok(v)
        }
    }
}

/// Sample-level checks of the orthogonality conditions for `X^ = G Z + h`:
/// `mean_gap = ||mean(X^) - mean(X)||_inf` and
/// `max_corr = max_ij |mean((X^_i - mean X^_i)((X^ - X)_j - mean))|`.
pub fn orthogonality_residual<T: Real>(
    est: &LinearEstimator<T>,
    samples_x: &[Vec<T>],
    samples_z: &[Vec<T>],
) -> Result<(T, T)> {
    if samples_x.len() != samples_z.len() || samples_x.is_empty() {
        return Err(shape_mismatch(samples_x.len(), samples_z.len()));
    }
    let hats: Vec<Vec<T>> = samples_z
        .iter()
        .map(|z| apply_estimator(est, z))
        .collect::<Result<_>>()?;
    let xh = draws(&hats, Structure::Dense)?;
    let x = draws(samples_x, Structure::Dense)?;
    if x.ncols() != xh.ncols() {
        return Err(shape_mismatch(xh.ncols(), x.ncols()));
    }
    let n = T::from_usize(x.nrows()).unwrap();
    let err = &xh - &x;
    let mean_gap = err
        .mean_axis(Axis(0))
        .expect("non-empty")
        .iter()
        .fold(T::zero(), |m, v| m.max(Float::abs(*v)));
    let xhc = &xh - &xh.mean_axis(Axis(0)).expect("non-empty");
    let ec = &err - &err.mean_axis(Axis(0)).expect("non-empty");
    let cross = xhc.t().dot(&ec);
    let max_corr = cross.iter().fold(T::zero(), |m, v| m.max(Float::abs(*v) / n));
    Ok((mean_gap, max_corr))
}
