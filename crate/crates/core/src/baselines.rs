//! Convex comparison reconstructions.
//!
//! * `solve_l1`: `1/2 ||y - Gamma u||^2 + lambda ||u||_1`
//! * `solve_tv`: `||y - Gamma z||^2 + lambda TV(z)`, isotropic TV with
//!   periodic forward differences.
//!
//! Both use monotone FISTA from the zero image with step `step_scale / L`;
//! an optional `[0, 1]` box is folded into the proximal step. The TV
//! proximal map is computed by fast gradient projection on the dual.

use crate::error::{Error, Result};
use crate::operators::ForwardOperator;
use crate::Real;
use ndarray::{Array2, Zip};
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    Tv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub iterations: usize,
    /// Constrain iterates to `[0, 1]`.
    pub box_constraint: bool,
    /// Multiplier on `1 / L`; halved automatically if the quadratic upper
    /// bound fails.
    pub step_scale: f64,
    /// Dual iterations per TV proximal step.
    pub tv_inner: usize,
}

impl BaselineConfig {
    pub fn l1(lambda: f64) -> Self {
        Self {
            regularizer: Regularizer::L1,
            lambda,
            iterations: 500,
            box_constraint: false,
            step_scale: 1.0,
            tv_inner: 50,
        }
    }

    pub fn tv(lambda: f64) -> Self {
        Self {
            regularizer: Regularizer::Tv,
            lambda,
            iterations: 300,
            box_constraint: true,
            step_scale: 1.0,
            tv_inner: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("baseline iterations must be >= 1".into()));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::InvalidArgument("step_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BaselineResult<T: Real> {
    pub image: Array2<T>,
    /// Objective after each iteration (accepted iterate).
    pub objectives: Vec<f64>,
}

impl<T: Real> BaselineResult<T> {
    pub fn objective_csv(&self) -> String {
        let mut s = String::from("iteration,objective\n");
        for (i, v) in self.objectives.iter().enumerate() {
            s.push_str(&format!("{},{:e}\n", i + 1, v));
        }
        s
    }
}

/// `sign(v) max(|v| - t, 0)`.
pub fn soft_threshold<T: Real>(v: T, t: T) -> T {
    let a = Float::abs(v) - t;
    if a > T::zero() {
        a * Float::signum(v)
    } else {
        T::zero()
    }
}

fn clamp_box<T: Real>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| v.max(T::zero()).min(T::one()));
}

/// Periodic forward differences `(D_rows x, D_cols x)`.
fn gradient<T: Real>(x: &Array2<T>) -> (Array2<T>, Array2<T>) {
    let (h, w) = x.dim();
    let gr = Array2::from_shape_fn((h, w), |(r, c)| x[[(r + 1) % h, c]] - x[[r, c]]);
    let gc = Array2::from_shape_fn((h, w), |(r, c)| x[[r, (c + 1) % w]] - x[[r, c]]);
    (gr, gc)
}

/// Adjoint of [`gradient`].
fn gradient_adjoint<T: Real>(pr: &Array2<T>, pc: &Array2<T>) -> Array2<T> {
    let (h, w) = pr.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        pr[[(r + h - 1) % h, c]] - pr[[r, c]] + pc[[r, (c + w - 1) % w]] - pc[[r, c]]
    })
}

pub fn total_variation<T: Real>(x: &Array2<T>) -> T {
    let (gr, gc) = gradient(x);
    gr.iter().zip(gc.iter()).map(|(a, b)| (*a * *a + *b * *b).sqrt()).sum()
}

/// `argmin_x 1/2 ||x - v||^2 + tau TV(x)` (optionally over the box), by
/// accelerated projected gradient on the dual field.
fn tv_prox<T: Real>(v: &Array2<T>, tau: T, iters: usize, box_constraint: bool) -> Array2<T> {
    let primal = |pr: &Array2<T>, pc: &Array2<T>| {
        let mut x = v - &gradient_adjoint(pr, pc).mapv(|d| d * tau);
        if box_constraint {
            clamp_box(&mut x);
        }
        x
    };
    if tau == T::zero() || iters == 0 {
        return primal(&Array2::zeros(v.dim()), &Array2::zeros(v.dim()));
    }
    // ||D||^2 <= 8 for periodic forward differences in 2-D.
    let step = T::one() / (T::lit(8.0) * tau);
    let mut pr = Array2::<T>::zeros(v.dim());
    let mut pc = pr.clone();
    let (mut qr, mut qc) = (pr.clone(), pc.clone());
    let mut t = T::one();
    let half = T::lit(0.5);
    for _ in 0..iters {
        let x = primal(&qr, &qc);
        let (gr, gc) = gradient(&x);
        let mut nr = &qr + &gr.mapv(|g| g * step);
        let mut nc = &qc + &gc.mapv(|g| g * step);
        Zip::from(&mut nr).and(&mut nc).for_each(|a, b| {
            let m = (*a * *a + *b * *b).sqrt().max(T::one());
            *a = *a / m;
            *b = *b / m;
        });
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * half;
        let beta = (t - T::one()) / t_next;
        qr = &nr + &(&nr - &pr).mapv(|d| d * beta);
        qc = &nc + &(&nc - &pc).mapv(|d| d * beta);
        pr = nr;
        pc = nc;
        t = t_next;
    }
    primal(&pr, &pc)
}

/// Monotone FISTA on `data_weight/2 ||Gamma u - y||^2 + g(u)`, where `g` is
/// evaluated by `reg` and its proximal map (step `eta`) by `prox`.
fn mfista<T: Real>(
    y: &Array2<T>,
    op: &dyn ForwardOperator<T>,
    cfg: &BaselineConfig,
    data_weight: T,
    reg: impl Fn(&Array2<T>) -> T,
    prox: impl Fn(&Array2<T>, T) -> Array2<T>,
) -> Result<BaselineResult<T>> {
    cfg.validate()?;
    op.check_measurement(y)?;
    let half = T::lit(0.5);
    let lip = data_weight * op.lipschitz();
    let mut eta = T::lit(cfg.step_scale) / lip.max(T::min_positive_value());
    let data = |g: &Array2<T>| {
        let r = g - y;
        half * data_weight * r.iter().map(|v| *v * *v).sum::<T>()
    };
    let mut z = Array2::<T>::zeros(op.image_shape());
    let mut gz = Array2::<T>::zeros(y.dim());
    let mut fz = data(&gz) + reg(&z);
    let (mut w, mut gw) = (z.clone(), gz.clone());
    let mut t = T::one();
    let mut objectives = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let resid = &gw - y;
        let grad = op.adjoint(&resid)?.mapv(|g| g * data_weight);
        let dw = data(&gw);
        let (v, gv) = loop {
            let v = prox(&(&w - &grad.mapv(|g| g * eta)), eta);
            let gv = op.apply(&v)?;
            let d = &v - &w;
            let bound = dw + (&grad * &d).sum() + d.iter().map(|x| *x * *x).sum::<T>() / (T::lit(2.0) * eta);
            let dv = data(&gv);
            if dv.is_finite() && dv <= bound + T::lit(1e-12) * (T::one() + Float::abs(bound)) {
                break (v, gv);
            }
            eta = eta * half;
            if eta < T::min_positive_value() {
                return Err(Error::Divergence("baseline step size underflow".into()));
            }
        };
        let fv = data(&gv) + reg(&v);
        if !fv.is_finite() {
            return Err(Error::Divergence("non-finite baseline objective".into()));
        }
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * half;
        let (zn, gzn, fzn) = if fv <= fz {
            (v.clone(), gv.clone(), fv)
        } else {
            (z.clone(), gz.clone(), fz)
        };
        let a = t / t_next;
        let b = (t - T::one()) / t_next;
        w = &zn + &(&v - &zn).mapv(|d| d * a) + &(&zn - &z).mapv(|d| d * b);
        gw = &gzn + &(&gv - &gzn).mapv(|d| d * a) + &(&gzn - &gz).mapv(|d| d * b);
        z = zn;
        gz = gzn;
        fz = fzn;
        t = t_next;
        objectives.push(fz.to_f64_lossy());
    }
    Ok(BaselineResult { image: z, objectives })
}

pub fn solve_l1<T: Real>(
    y: &Array2<T>,
    op: &dyn ForwardOperator<T>,
    cfg: &BaselineConfig,
) -> Result<BaselineResult<T>> {
    let lambda = T::lit(cfg.lambda);
    let boxed = cfg.box_constraint;
    mfista(
        y,
        op,
        cfg,
        T::one(),
        |u| lambda * u.iter().map(|v| Float::abs(*v)).sum::<T>(),
        |v, eta| {
            let mut u = v.mapv(|x| soft_threshold(x, lambda * eta));
            if boxed {
                clamp_box(&mut u);
            }
            u
        },
    )
}

pub fn solve_tv<T: Real>(
    y: &Array2<T>,
    op: &dyn ForwardOperator<T>,
    cfg: &BaselineConfig,
) -> Result<BaselineResult<T>> {
    let lambda = T::lit(cfg.lambda);
    let boxed = cfg.box_constraint;
    let inner = cfg.tv_inner;
    // ||r||^2 = (2/2) ||r||^2: data weight 2 puts it in the common form.
    mfista(
        y,
        op,
        cfg,
        T::lit(2.0),
        |z| lambda * total_variation(z),
        |v, eta| tv_prox(v, lambda * eta, inner, boxed),
    )
}

/// Dispatches on the configured regularizer.
pub fn solve<T: Real>(y: &Array2<T>, op: &dyn ForwardOperator<T>, cfg: &BaselineConfig) -> Result<BaselineResult<T>> {
    match cfg.regularizer {
        Regularizer::L1 => solve_l1(y, op, cfg),
        Regularizer::Tv => solve_tv(y, op, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;
    use crate::operators::{Decimation, DenseOperator, Radon, SrKernel};
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random::<f64>())
    }

    fn square_operator(seed: u64) -> DenseOperator<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Array2<f64> = Array2::from_shape_fn(
            (64, 64),
            |(i, j)| if i == j { 1.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5) / 8.0,
        );
        DenseOperator::new(m, (8, 8)).unwrap()
    }

    #[test]
    fn soft_threshold_elementwise() {
        for (v, t, e) in [
            (3.0, 1.0, 2.0),
            (-3.0, 1.0, -2.0),
            (0.5, 1.0, 0.0),
            (-0.5, 1.0, 0.0),
            (1.0, 1.0, 0.0),
            (2.0, 0.0, 2.0),
        ] {
            assert_eq!(soft_threshold(v, t), e);
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let op = square_operator(1);
        let y = op.apply(&random(8, 8, 2)).unwrap();
        let lmax = op.adjoint(&y).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let r = solve_l1(&y, &op, &BaselineConfig::l1(lmax * 1.01)).unwrap();
        assert!(r.image.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_lambda_matches_least_squares() {
        let op = square_operator(3);
        let y = op.apply(&random(8, 8, 4)).unwrap().mapv(|v| v + 0.01);
        // Normal equations, solved directly.
        let a = op.matrix();
        let ata = a.t().dot(a);
        let aty: Array1<f64> = a.t().dot(&y.column(0));
        let ls = Cholesky::new(&ata).unwrap().solve_vec(aty.view());
        let cfg = BaselineConfig {
            iterations: 2000,
            ..BaselineConfig::l1(0.0)
        };
        let r = solve_l1(&y, &op, &cfg).unwrap();
        let got = Array1::from_iter(r.image.iter().copied());
        let rel = (&got - &ls).mapv(|v| v * v).sum().sqrt() / ls.mapv(|v| v * v).sum().sqrt();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn l1_objective_monotone_and_box_respected() {
        let op = Decimation::<f64>::new(16, 16, 2, SrKernel::Gaussian { sigma: 1.0 }).unwrap();
        let y = op.apply(&random(16, 16, 5)).unwrap();
        let cfg = BaselineConfig {
            box_constraint: true,
            iterations: 200,
            ..BaselineConfig::l1(1e-3)
        };
        let r = solve_l1(&y, &op, &cfg).unwrap();
        assert!(r.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(r.image.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn tv_adjoint_pair() {
        let x = random(7, 5, 6);
        let (pr, pc) = (random(7, 5, 7), random(7, 5, 8));
        let (gr, gc) = gradient(&x);
        let lhs = (&gr * &pr).sum() + (&gc * &pc).sum();
        let rhs = (&x * &gradient_adjoint(&pr, &pc)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tv_prox_optimality() {
        // The prox output must beat nearby perturbations on its objective.
        let v = random(12, 12, 9);
        let tau = 0.1;
        let x = tv_prox(&v, tau, 500, false);
        let obj = |z: &Array2<f64>| 0.5 * (z - &v).mapv(|d| d * d).sum() + tau * total_variation(z);
        let f = obj(&x);
        for seed in 0..10 {
            let dz = random(12, 12, 100 + seed).mapv(|d| (d - 0.5) * 1e-2);
            assert!(obj(&(&x + &dz)) >= f - 1e-6);
        }
        assert!(total_variation(&x) < total_variation(&v));
    }

    #[test]
    fn tv_zero_lambda_matches_right_inverse() {
        let radon = Radon::<f64>::new(16, &(0..90).map(|a| 2.0 * a as f64).collect::<Vec<_>>()).unwrap();
        let x = random(16, 16, 10).mapv(|v| 0.1 + 0.8 * v);
        let y = radon.apply(&x).unwrap();
        let cfg = BaselineConfig {
            iterations: 3000,
            ..BaselineConfig::tv(0.0)
        };
        let tv = solve_tv(&y, &radon, &cfg).unwrap().image;
        let ri = radon.right_inverse_with(&y, 3000, 0.0).unwrap().image;
        let diff = (&tv - &ri).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-4, "{diff}");
    }

    #[test]
    fn constant_image_recovered() {
        let op = Decimation::<f64>::new(16, 16, 4, SrKernel::Gaussian { sigma: 2.0 }).unwrap();
        let y = op.apply(&Array2::from_elem((16, 16), 0.6)).unwrap();
        for lambda in [1e-6, 1e-2, 1.0] {
            let r = solve_tv(
                &y,
                &op,
                &BaselineConfig {
                    iterations: 500,
                    ..BaselineConfig::tv(lambda)
                },
            )
            .unwrap();
            assert!(r.image.iter().all(|v| (v - 0.6).abs() < 1e-6), "lambda {lambda}");
        }
    }

    #[test]
    fn tv_monotone_at_published_weights() {
        let x = random(16, 16, 11);
        let sr = Decimation::<f64>::new(16, 16, 4, SrKernel::Ideal).unwrap();
        let radon = Radon::<f64>::new(16, &(0..45).map(|a| 2.0 * a as f64).collect::<Vec<_>>()).unwrap();
        let ops: [(&dyn ForwardOperator<f64>, f64); 2] = [(&sr, 5e-6), (&radon, 1e-6)];
        for (op, lambda) in ops {
            let y = op.apply(&x).unwrap();
            let r = solve_tv(
                &y,
                op,
                &BaselineConfig {
                    iterations: 100,
                    ..BaselineConfig::tv(lambda)
                },
            )
            .unwrap();
            assert!(r.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(r.image.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn invalid_config() {
        let op = square_operator(1);
        let y = Array2::zeros((64, 1));
        assert!(solve_l1(&y, &op, &BaselineConfig::l1(-1.0)).is_err());
        assert!(solve_l1(
            &y,
            &op,
            &BaselineConfig {
                iterations: 0,
                ..BaselineConfig::l1(0.0)
            }
        )
        .is_err());
    }
}
