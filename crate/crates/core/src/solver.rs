//! Alternating projections between an affine regression in the scattering
//! domain and the measurement-consistent set `{u : ||Gamma u - y|| <= eps}`.
//!
//! Each outer iteration maps `Phi z` through a fitted estimator to a target
//! `Z`, then approximately minimizes `||Phi u - Z||^2` over the measurement
//! set by projected gradient descent with backtracking, starting from the
//! previous iterate. The gradient is first restricted to the null space of
//! `Gamma`, so trial points stay (nearly) feasible and their projection is
//! cheap; for `eps = 0` this gives the same iterates as projecting
//! `u - eta grad` directly.

use crate::error::{Error, Result};
use crate::estimator::{apply_estimator, fit_lmmse, fit_moments, LinearEstimator, Structure};
use crate::filterbank::FilterBank;
use crate::operators::{measurement_distance, ForwardOperator};
use crate::scattering::{objective_and_gradient, scatter, DEFAULT_MU_REL};
use crate::Real;
use ndarray::Array2;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `z(0)` is the measurement-set projection of the zero image.
    Zero,
    /// `z(0)` is the operator's right inverse of `y`.
    RightInverse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Outer iterations `r`.
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Initial step, in units of `stride^2` (the gradient of a coefficient
    /// spreads over `stride^2` pixels).
    pub step_init: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Measurement ball radius.
    pub epsilon: f64,
    /// Read `epsilon` as a fraction of `||y||`.
    pub epsilon_relative: bool,
    pub init: Init,
    pub max_order: usize,
    pub mu_rel: f64,
    /// `None` selects the estimator's default ridge.
    pub ridge: Option<f64>,
    /// Pool covariances over spatial positions.
    pub share_covariance: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 20,
            inner_iterations: 50,
            step_init: 1.0,
            backtrack: 0.5,
            max_backtracks: 30,
            epsilon: 0.0,
            epsilon_relative: false,
            init: Init::Zero,
            max_order: 2,
            mu_rel: DEFAULT_MU_REL,
            ridge: None,
            share_covariance: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 || self.inner_iterations == 0 {
            return Err(Error::InvalidArgument(
                "outer and inner iteration counts must be >= 1".into(),
            ));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.step_init > 0.0) {
            return Err(Error::InvalidArgument(
                "need step_init > 0 and 0 < backtrack < 1".into(),
            ));
        }
        if self.max_order > 2 {
            return Err(Error::InvalidArgument("max_order must be 0, 1 or 2".into()));
        }
        Ok(())
    }

    /// Ball radius for measurements `y`.
    pub fn radius<T: Real>(&self, y: &Array2<T>) -> T {
        if self.epsilon_relative {
            T::lit(self.epsilon) * norm(y)
        } else {
            T::lit(self.epsilon)
        }
    }

    /// Radius plus a floating-point allowance, used when checking feasibility.
    /// The allowance is relative to `max(||y||, 1)` so that `y = 0` (a
    /// constant realization) still tolerates round-off.
    pub fn feasibility_tolerance<T: Real>(&self, y: &Array2<T>) -> T {
        let slack = if T::DTYPE == "f32" { 1e-5 } else { 1e-9 };
        self.radius(y) + T::lit(slack) * norm(y).max(T::one())
    }

    fn structure<T: Real>(&self, fb: &FilterBank<T>) -> Structure {
        if self.share_covariance {
            let (h, w) = fb.subsampled_shape();
            Structure::Shared { block_len: h * w }
        } else {
            Structure::Dense
        }
    }
}

fn norm<T: Real>(a: &Array2<T>) -> T {
    a.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

/// Outcome of one inner projection.
#[derive(Clone, Debug)]
pub struct InnerResult<T: Real> {
    pub image: Array2<T>,
    /// Objective at the start and after every accepted step.
    pub objectives: Vec<T>,
    /// Set when no step satisfied sufficient decrease within the backtracking budget.
    pub stalled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub inner_objective_final: f64,
    pub measurement_residual: f64,
    pub phi_mse: Option<f64>,
    pub stalled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    /// CSV with header `iteration,inner_objective_final,measurement_residual,phi_mse_if_available`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,inner_objective_final,measurement_residual,phi_mse_if_available\n");
        for r in &self.records {
            let mse = r.phi_mse.map(|v| format!("{v:.10e}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:.10e},{:.10e},{}\n",
                r.iteration, r.inner_objective_final, r.measurement_residual, mse
            ));
        }
        s
    }
}

/// Approximate `argmin_{u in A} ||Phi u - target||^2` by projected gradient
/// descent from `u0`, with Armijo backtracking. Returns the best iterate.
pub fn project_phi_measurements<T: Real>(
    target: &[T],
    op: &dyn ForwardOperator<T>,
    y: &Array2<T>,
    u0: &Array2<T>,
    fb: &FilterBank<T>,
    cfg: &SolverConfig,
) -> Result<InnerResult<T>> {
    let eps = cfg.radius(y);
    let mut u = op.project_measurements(u0, y, eps)?;
    let mut cur = objective_and_gradient(&u, fb, cfg.max_order, target, cfg.mu_rel)?;
    let mut objectives = vec![cur.value];
    let stride2 = (fb.stride() * fb.stride()) as f64;
    let mut eta = T::lit(cfg.step_init * stride2);
    let sufficient = T::lit(1e-4);
    let mut stalled = false;
    let tolerance = cfg.feasibility_tolerance(y);
    for _ in 0..cfg.inner_iterations {
        let direction = op.project_nullspace(&cur.gradient)?;
        let mut accepted = None;
        let mut infeasible = false;
        for attempt in 0..=cfg.max_backtracks {
            let trial = &u - &direction.mapv(|g| g * eta);
            let cand = op.project_measurements(&trial, y, eps)?;
            if measurement_distance(op, &cand, y)? > tolerance {
                // iterative projections can fall short (e.g. y = 0 with a
                // relative radius); keep the last feasible iterate
                infeasible = true;
                break;
            }
            let step2: T = cand.iter().zip(u.iter()).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
            if step2 == T::zero() {
                accepted = Some((cand, None, attempt));
                break;
            }
            let next = objective_and_gradient(&cand, fb, cfg.max_order, target, cfg.mu_rel)?;
            if next.value.is_finite() && next.value <= cur.value - sufficient * step2 / eta {
                accepted = Some((cand, Some(next), attempt));
                break;
            }
            eta = eta * T::lit(cfg.backtrack);
        }
        if infeasible {
            stalled = true;
            break;
        }
        match accepted {
            None => {
                stalled = true;
                break;
            }
            Some((_, None, _)) => break,
            Some((cand, Some(next), attempt)) => {
                u = cand;
                cur = next;
                objectives.push(cur.value);
                if attempt == 0 {
                    eta = eta * T::lit(2.0);
                }
            }
        }
    }
    if stalled {
        log::warn!("inner projection stalled after {} accepted steps", objectives.len() - 1);
    }
    Ok(InnerResult {
        image: u,
        objectives,
        stalled,
    })
}

fn initial_point<T: Real>(op: &dyn ForwardOperator<T>, y: &Array2<T>, cfg: &SolverConfig) -> Result<Array2<T>> {
    match cfg.init {
        Init::Zero => op.project_measurements(&Array2::zeros(op.image_shape()), y, cfg.radius(y)),
        Init::RightInverse => op.right_inverse(y),
    }
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (*u - *v).to_f64_lossy().powi(2)).sum()
}

/// Training output: one estimator per outer iteration plus an ensemble trace
/// (mean inner objective, worst residual, in-sample Phi-domain MSE after the
/// regression step).
#[derive(Clone, Debug)]
pub struct Training<T: Real> {
    pub estimators: Vec<LinearEstimator<T>>,
    /// Ridge actually used by each fit.
    pub ridges: Vec<f64>,
    pub trace: IterationTrace,
}

/// Runs the outer loop on a training ensemble, fitting the estimator of
/// iteration `k` on pairs `(Phi x_i, Phi z_i(k))`.
pub fn train<T: Real>(
    ensemble: &[Array2<T>],
    op: &dyn ForwardOperator<T>,
    fb: &FilterBank<T>,
    cfg: &SolverConfig,
) -> Result<Training<T>> {
    cfg.validate()?;
    if ensemble.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs >= 2 images, got {}",
            ensemble.len()
        )));
    }
    let ys: Vec<Array2<T>> = ensemble.par_iter().map(|x| op.apply(x)).collect::<Result<_>>()?;
    let phix: Vec<Vec<T>> = ensemble
        .par_iter()
        .map(|x| scatter(x, fb, cfg.max_order).map(|s| s.values))
        .collect::<Result<_>>()?;
    let mut zs: Vec<Array2<T>> = ys
        .par_iter()
        .map(|y| initial_point(op, y, cfg))
        .collect::<Result<_>>()?;
    let structure = cfg.structure(fb);
    let mut estimators = Vec::with_capacity(cfg.outer_iterations);
    let mut ridges = Vec::with_capacity(cfg.outer_iterations);
    let mut trace = IterationTrace::default();
    for k in 0..cfg.outer_iterations {
        let phiz: Vec<Vec<T>> = zs
            .par_iter()
            .map(|z| scatter(z, fb, cfg.max_order).map(|s| s.values))
            .collect::<Result<_>>()?;
        let mm = fit_moments(&phix, &phiz, cfg.ridge.map(T::lit), structure)?;
        let est = fit_lmmse(&mm, k)?;
        ridges.push(mm.ridge.to_f64_lossy());
        let targets: Vec<Vec<T>> = phiz.iter().map(|p| apply_estimator(&est, p)).collect::<Result<_>>()?;
        let phi_mse = targets
            .iter()
            .zip(&phix)
            .map(|(t, x)| squared_distance(t, x))
            .sum::<f64>()
            / ensemble.len() as f64;
        let results: Vec<InnerResult<T>> = targets
            .par_iter()
            .zip(ys.par_iter())
            .zip(zs.par_iter())
            .map(|((t, y), z)| project_phi_measurements(t, op, y, z, fb, cfg))
            .collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        let mut objective = 0.0;
        let mut stalled = false;
        for (r, y) in results.iter().zip(&ys) {
            worst = worst.max(measurement_distance(op, &r.image, y)?.to_f64_lossy());
            objective += r.objectives.last().map(|v| v.to_f64_lossy()).unwrap_or(0.0);
            stalled |= r.stalled;
        }
        zs = results.into_iter().map(|r| r.image).collect();
        log::info!("train iteration {k}: phi mse {phi_mse:.4e}, worst residual {worst:.3e}");
        trace.records.push(IterationRecord {
            iteration: k,
            inner_objective_final: objective / ensemble.len() as f64,
            measurement_residual: worst,
            phi_mse: Some(phi_mse),
            stalled,
        });
        estimators.push(est);
    }
    Ok(Training {
        estimators,
        ridges,
        trace,
    })
}

/// Panels of one reconstruction run.
#[derive(Clone, Debug)]
pub struct Reconstruction<T: Real> {
    /// Right inverse of the measurements (the linear reference).
    pub projection: Array2<T>,
    /// Iterate after the first outer iteration.
    pub first_iterate: Array2<T>,
    pub image: Array2<T>,
    pub trace: IterationTrace,
}

/// Runs `min(cfg.outer_iterations, estimators.len())` outer iterations on
/// measurements `y`. `truth` enables the Phi-domain MSE column of the trace.
pub fn reconstruct<T: Real>(
    y: &Array2<T>,
    op: &dyn ForwardOperator<T>,
    fb: &FilterBank<T>,
    estimators: &[LinearEstimator<T>],
    cfg: &SolverConfig,
    truth: Option<&Array2<T>>,
) -> Result<Reconstruction<T>> {
    cfg.validate()?;
    op.check_measurement(y)?;
    let rounds = cfg.outer_iterations.min(estimators.len());
    if rounds == 0 {
        return Err(Error::InvalidArgument("no estimators supplied".into()));
    }
    let projection = op.right_inverse(y)?;
    let phix = truth.map(|x| scatter(x, fb, cfg.max_order)).transpose()?;
    let mut z = initial_point(op, y, cfg)?;
    let mut first_iterate = None;
    let mut trace = IterationTrace::default();
    for (k, est) in estimators.iter().take(rounds).enumerate() {
        let phiz = scatter(&z, fb, cfg.max_order)?;
        let target = apply_estimator(est, &phiz.values)?;
        let inner = project_phi_measurements(&target, op, y, &z, fb, cfg)?;
        z = inner.image;
        let phi_mse = match &phix {
            Some(p) => Some(squared_distance(&scatter(&z, fb, cfg.max_order)?.values, &p.values)),
            None => None,
        };
        trace.records.push(IterationRecord {
            iteration: k,
            inner_objective_final: inner.objectives.last().map(|v| v.to_f64_lossy()).unwrap_or(0.0),
            measurement_residual: measurement_distance(op, &z, y)?.to_f64_lossy(),
            phi_mse,
            stalled: inner.stalled,
        });
        if first_iterate.is_none() {
            first_iterate = Some(z.clone());
        }
    }
    let residual = measurement_distance(op, &z, y)?;
    if residual > cfg.feasibility_tolerance(y) {
        return Err(Error::Divergence(format!(
            "final measurement residual {} exceeds the ball radius {}",
            residual.to_f64_lossy(),
            cfg.radius(y).to_f64_lossy()
        )));
    }
    Ok(Reconstruction {
        projection,
        first_iterate: first_iterate.expect("rounds >= 1"),
        image: z,
        trace,
    })
}
