//! Dense symmetric positive-definite factorization.

use crate::error::{shape_mismatch, Error, Result};
use crate::Real;
use ndarray::{Array1, Array2, ArrayView1, Axis};

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky<T: Real> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes a symmetric positive-definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &Array2<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(shape_mismatch((n, n), a.dim()));
        }
        let mut data = vec![T::zero(); n * n];
        for j in 0..n {
            let (head, tail) = data.split_at_mut((j + 1) * n);
            let row_j = &mut head[j * n..];
            let d = a[[j, j]] - dot(&row_j[..j], &row_j[..j]);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::SingularCovariance {
                    row: j,
                    pivot: d.to_f64_lossy(),
                });
            }
            let d = d.sqrt();
            row_j[j] = d;
            let inv = T::one() / d;
            for (i, row_i) in tail.chunks_exact_mut(n).enumerate() {
                let i = i + j + 1;
                row_i[j] = (a[[i, j]] - dot(&row_i[..j], &row_j[..j])) * inv;
            }
        }
        let l = Array2::from_shape_vec((n, n), data).expect("square");
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &Array2<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve_vec(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        let l = self.l.as_slice().expect("standard layout");
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &l[i * n..i * n + i + 1];
            x[i] = (x[i] - dot(&row[..i], &x[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let row = &l[i * n..i * n + i + 1];
            x[i] = x[i] / row[i];
            let xi = x[i];
            for (xk, lk) in x[..i].iter_mut().zip(&row[..i]) {
                *xk -= *lk * xi;
            }
        }
        Array1::from_vec(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros(b.dim());
        for (mut o, col) in out.axis_iter_mut(Axis(1)).zip(b.axis_iter(Axis(1))) {
            o.assign(&self.solve_vec(col));
        }
        out
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for t in 0..4 {
            acc[t] += a[4 * c + t] * b[4 * c + t];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for t in 4 * chunks..a.len() {
        s += a[t] * b[t];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factor_and_solve() {
        let a: Array2<f64> = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let c = Cholesky::new(&a).unwrap();
        let l = c.factor();
        let rec = l.dot(&l.t());
        for (x, y) in rec.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let b: Array1<f64> = array![1.0, -2.0, 0.5];
        let x = c.solve_vec(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        let bm: Array2<f64> = array![[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]];
        let xm = c.solve_mat(&bm);
        assert!((a.dot(&xm) - &bm).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            Cholesky::new(&a),
            Err(Error::SingularCovariance { row: 1, .. })
        ));
    }
}
