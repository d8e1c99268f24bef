//! Figures of merit: MSE, Pearson correlation, the standardized cokurtosis
//! tensor and Mardia's multivariate kurtosis.
//!
//! Statistics are accumulated in `f64` whatever the input precision.

use crate::error::{shape_mismatch, Error, Result};
use crate::linalg::Cholesky;
use crate::Real;
use ndarray::{Array1, Array2, Axis};

pub fn mse<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_mismatch(a.dim(), b.dim()));
    }
    let n = a.len().max(1) as f64;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).powi(2))
        .sum::<f64>()
        / n)
}

pub fn correlation<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_mismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.to_f64_lossy() - ma, y.to_f64_lossy() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance(0));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance(1));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Stacks samples into an `n x p` matrix, checking lengths.
fn stack<T: Real>(samples: &[Vec<T>]) -> Result<Array2<f64>> {
    let n = samples.len();
    let p = samples.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::InvalidArgument("empty sample vectors".into()));
    }
    let mut out = Array2::zeros((n, p));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(samples) {
        if s.len() != p {
            return Err(shape_mismatch(p, s.len()));
        }
        row.iter_mut().zip(s).for_each(|(o, v)| *o = v.to_f64_lossy());
    }
    Ok(out)
}

fn centre(x: &mut Array2<f64>) -> Array1<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    for mut row in x.axis_iter_mut(Axis(0)) {
        row -= &mean;
    }
    mean
}

/// Sample standardized fourth moments `E[z_i z_j z_k z_l]`, each coordinate
/// standardized by its own mean and (1/n) standard deviation.
///
/// Full tensor: `p^2 x p^2`, row `i p + j`, column `k p + l`. With
/// `fixed_first_index` the first index is averaged out,
/// `(1/p) sum_i kurt_ijkl`, giving a `p x p^2` matrix with row `j` and
/// column `k p + l`.
pub fn cokurtosis_tensor<T: Real>(patches: &[Vec<T>], fixed_first_index: bool) -> Result<Array2<f64>> {
    if patches.len() < 2 {
        return Err(Error::InvalidArgument("cokurtosis needs at least 2 samples".into()));
    }
    let mut z = stack(patches)?;
    let (n, p) = z.dim();
    centre(&mut z);
    for (i, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(i));
        }
        col.mapv_inplace(|v| v / sd);
    }
    // Pairwise products, one row per sample.
    let pairs = Array2::from_shape_fn((n, p * p), |(s, c)| z[[s, c / p]] * z[[s, c % p]]);
    let left = if fixed_first_index {
        let avg = z.mean_axis(Axis(1)).expect("p > 0");
        Array2::from_shape_fn((n, p), |(s, j)| avg[s] * z[[s, j]])
    } else {
        pairs.clone()
    };
    Ok(left.t().dot(&pairs) / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KurtosisReport {
    pub beta_hat: f64,
    pub p: usize,
    /// Dimension of the subspace the statistic was computed in.
    pub rank: usize,
    pub n: usize,
    /// `beta_hat - rank (rank + 2)`.
    pub excess: f64,
    /// Ratio of extreme eigenvalues of the sample covariance (estimated).
    pub cond: f64,
}

/// Mardia's sample kurtosis with the `1/n` covariance.
///
/// When the covariance is singular and `ridge` is given, `ridge * trace / p`
/// is added to the diagonal and a warning is logged.
pub fn mardia_excess<T: Real>(samples: &[Vec<T>], ridge: Option<f64>) -> Result<KurtosisReport> {
    let mut x = stack(samples)?;
    let (n, p) = x.dim();
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "mardia needs n > p, got n = {n}, p = {p}"
        )));
    }
    centre(&mut x);
    let mut cov = x.t().dot(&x) / n as f64;
    let chol = match Cholesky::new(&cov) {
        Ok(c) => c,
        Err(e) => {
            let Some(r) = ridge else { return Err(e) };
            let shift = r * cov.diag().sum() / p as f64;
            log::warn!("singular sample covariance ({e}); adding ridge {shift:e}");
            cov.diag_mut().mapv_inplace(|v| v + shift);
            Cholesky::new(&cov)?
        }
    };
    let beta_hat = x
        .axis_iter(Axis(0))
        .map(|row| {
            let d = row.dot(&chol.solve_vec(row));
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let cond = extreme_eigenvalue(p, |v| cov.dot(v)) / (1.0 / extreme_eigenvalue(p, |v| chol.solve_vec(v.view())));
    Ok(KurtosisReport {
        beta_hat,
        p,
        rank: p,
        n,
        excess: beta_hat - (p * (p + 2)) as f64,
        cond,
    })
}

/// Mardia's kurtosis restricted to the principal subspace of the sample
/// covariance spanned by eigenvalues above `rel_tol * max`.
///
/// Agrees with [`mardia_excess`] for well-conditioned data; for data on a
/// (numerically) lower-dimensional subspace it is the statistic of that
/// subspace, with the excess taken against `rank (rank + 2)`.
pub fn mardia_excess_truncated<T: Real>(samples: &[Vec<T>], rel_tol: f64) -> Result<KurtosisReport> {
    let mut x = stack(samples)?;
    let (n, p) = x.dim();
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "mardia needs n > p, got n = {n}, p = {p}"
        )));
    }
    centre(&mut x);
    let cov = x.t().dot(&x) / n as f64;
    let eig = nalgebra::DMatrix::from_fn(p, p, |i, j| cov[[i, j]]).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::SingularCovariance { row: 0, pivot: lmax });
    }
    let keep: Vec<usize> = (0..p).filter(|&k| eig.eigenvalues[k] > rel_tol * lmax).collect();
    let rank = keep.len();
    // Whitening map onto the retained eigenvectors, one row per direction.
    let w = Array2::from_shape_fn((rank, p), |(r, i)| {
        let k = keep[r];
        eig.eigenvectors[(i, k)] / eig.eigenvalues[k].sqrt()
    });
    let white = x.dot(&w.t());
    let beta_hat = white.axis_iter(Axis(0)).map(|row| row.dot(&row).powi(2)).sum::<f64>() / n as f64;
    let lmin = keep.iter().map(|&k| eig.eigenvalues[k]).fold(f64::INFINITY, f64::min);
    Ok(KurtosisReport {
        beta_hat,
        p,
        rank,
        n,
        excess: beta_hat - (rank * (rank + 2)) as f64,
        cond: lmax / lmin,
    })
}

/// Largest eigenvalue of a symmetric positive operator by power iteration.
fn extreme_eigenvalue(p: usize, apply: impl Fn(&Array1<f64>) -> Array1<f64>) -> f64 {
    let mut v = Array1::from_shape_fn(p, |i| 1.0 + 0.01 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = apply(&v);
        let nw = w.dot(&w).sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w) / v.dot(&v);
        v = w / nw;
    }
    lambda
}

/// Vectorized `patch x patch` windows taken every `stride` pixels (no wrap).
pub fn patch_vectors<T: Real>(img: &Array2<T>, patch: usize, stride: usize) -> Result<Vec<Vec<T>>> {
    let (h, w) = img.dim();
    if patch == 0 || stride == 0 || patch > h || patch > w {
        return Err(Error::InvalidArgument(format!(
            "patch {patch} / stride {stride} invalid for {h}x{w}"
        )));
    }
    let mut out = Vec::new();
    for r in (0..=h - patch).step_by(stride) {
        for c in (0..=w - patch).step_by(stride) {
            out.push(
                img.slice(ndarray::s![r..r + patch, c..c + patch])
                    .iter()
                    .copied()
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Relative eigenvalue cut-off for patch statistics. Patches of band-limited
/// images span a numerically lower-dimensional subspace.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

fn patch_mardia<T: Real>(patches: &[Vec<T>], rank_tol: Option<f64>) -> Result<KurtosisReport> {
    match rank_tol {
        Some(tol) => mardia_excess_truncated(patches, tol),
        None => mardia_excess(patches, None),
    }
}

/// Mardia excess over the patches of one image; `rank_tol` selects the
/// subspace-restricted statistic.
pub fn image_excess_kurtosis<T: Real>(
    img: &Array2<T>,
    patch: usize,
    stride: usize,
    rank_tol: Option<f64>,
) -> Result<KurtosisReport> {
    patch_mardia(&patch_vectors(img, patch, stride)?, rank_tol)
}

/// Mardia excess over the pooled patches of a set of images.
pub fn set_excess_kurtosis<T: Real>(
    imgs: &[Array2<T>],
    patch: usize,
    stride: usize,
    rank_tol: Option<f64>,
) -> Result<KurtosisReport> {
    let mut all = Vec::new();
    for img in imgs {
        all.extend(patch_vectors(img, patch, stride)?);
    }
    patch_mardia(&all, rank_tol)
}
