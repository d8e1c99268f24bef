//! Seeded samplers for test images: 2-D Ising realizations and log-Gaussian
//! Cox point-process images.
//!
//! Temperatures are in coupling units (`J / k_B = 1`); the critical point of
//! the square lattice is at `T ~ 2.269`, so `T = 0.3` is deep in the ordered
//! phase.

use crate::error::{Error, Result};
use crate::fft::{angular_frequency, Fft2};
use crate::Real;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsingInit {
    Random,
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingParams {
    pub temperature: f64,
    pub sweeps: usize,
    pub init: IsingInit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Splat {
    /// Each point adds 1 to the pixel containing it.
    Nearest,
    /// Each point is shared among the four nearest pixel centres (periodic).
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoxParams {
    /// Standard deviation (pixels) of the Gaussian smoothing of the white
    /// noise; `None` gives a constant intensity.
    pub smoothing: Option<f64>,
    /// Standard deviation of the log-intensity.
    pub log_sd: f64,
    /// Mean number of points per pixel.
    pub base_rate: f64,
    pub splat: Splat,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProcessKind {
    Ising(IsingParams),
    Cox(CoxParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub size: usize,
    pub seed: u64,
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArgument("process size must be positive".into()));
        }
        match self.kind {
            ProcessKind::Ising(p) if !(p.temperature > 0.0) => Err(Error::InvalidArgument(format!(
                "temperature {} must be > 0",
                p.temperature
            ))),
            ProcessKind::Cox(p) if !(p.base_rate >= 0.0) || !(p.log_sd >= 0.0) => {
                Err(Error::InvalidArgument("cox rates and log_sd must be >= 0".into()))
            }
            ProcessKind::Cox(CoxParams { smoothing: Some(s), .. }) if !(s > 0.0) => {
                Err(Error::InvalidArgument("cox smoothing must be > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Draws one realization.
pub fn sample<T: Real>(spec: &ProcessSpec) -> Result<Array2<T>> {
    match spec.kind {
        ProcessKind::Ising(_) => sample_ising(spec),
        ProcessKind::Cox(_) => sample_cox(spec),
    }
}

/// Periodic square-lattice Ising chain with checkerboard heat-bath sweeps.
#[derive(Clone, Debug)]
pub struct IsingLattice {
    size: usize,
    beta: f64,
    spins: Vec<i8>,
}

impl IsingLattice {
    pub fn new(size: usize, temperature: f64, init: IsingInit, rng: &mut impl Rng) -> Self {
        let spins = (0..size * size)
            .map(|_| match init {
                IsingInit::Up => 1,
                IsingInit::Down => -1,
                IsingInit::Random => {
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
            })
            .collect();
        Self {
            size,
            beta: 1.0 / temperature,
            spins,
        }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// One sweep: all even sites, then all odd sites.
    pub fn sweep(&mut self, rng: &mut impl Rng) {
        let n = self.size;
        for parity in 0..2 {
            for r in 0..n {
                for c in 0..n {
                    if (r + c) % 2 != parity {
                        continue;
                    }
                    let up = self.spins[((r + n - 1) % n) * n + c];
                    let down = self.spins[((r + 1) % n) * n + c];
                    let left = self.spins[r * n + (c + n - 1) % n];
                    let right = self.spins[r * n + (c + 1) % n];
                    let h = (up + down + left + right) as f64;
                    let p_up = 1.0 / (1.0 + (-2.0 * self.beta * h).exp());
                    self.spins[r * n + c] = if rng.random::<f64>() < p_up { 1 } else { -1 };
                }
            }
        }
    }

    /// Spins mapped `-1 -> 0`, `+1 -> 1`.
    pub fn image<T: Real>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.size, self.size), |(r, c)| {
            if self.spins[r * self.size + c] > 0 {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

pub fn sample_ising<T: Real>(spec: &ProcessSpec) -> Result<Array2<T>> {
    spec.validate()?;
    let ProcessKind::Ising(p) = spec.kind else {
        return Err(Error::InvalidArgument("not an Ising spec".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lattice = IsingLattice::new(spec.size, p.temperature, p.init, &mut rng);
    for _ in 0..p.sweeps {
        lattice.sweep(&mut rng);
    }
    Ok(lattice.image())
}

/// Log-Gaussian intensity per pixel with mean `base_rate`.
fn intensity(size: usize, p: &CoxParams, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let Some(scale) = p.smoothing else {
        return Array2::from_elem((size, size), p.base_rate);
    };
    let fft = Fft2::<f64>::new(size, size);
    let mut field = Array2::from_shape_fn((size, size), |_| Complex64::new(StandardNormal.sample(rng), 0.0));
    fft.forward(&mut field);
    let mut power = 0.0;
    for ((r, c), v) in field.indexed_iter_mut() {
        let (wy, wx) = (angular_frequency(r, size), angular_frequency(c, size));
        let h = (-0.5 * scale * scale * (wx * wx + wy * wy)).exp();
        power += h * h;
        *v *= h;
    }
    fft.inverse(&mut field);
    // Pointwise variance of smoothed unit white noise.
    let sd = (power / (size * size) as f64).sqrt();
    let s = p.log_sd;
    field.mapv(|v| p.base_rate * (s * v.re / sd - 0.5 * s * s).exp())
}

/// Draws the Cox image together with the intensity it was drawn from.
pub fn sample_cox_with_intensity<T: Real>(spec: &ProcessSpec) -> Result<(Array2<T>, Array2<f64>)> {
    spec.validate()?;
    let ProcessKind::Cox(p) = spec.kind else {
        return Err(Error::InvalidArgument("not a Cox spec".into()));
    };
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lambda = intensity(n, &p, &mut rng);
    let mut img = Array2::<f64>::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            let l = lambda[[r, c]];
            if !(l > 0.0) {
                continue;
            }
            let count = Poisson::new(l)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng) as u64;
            for _ in 0..count {
                let (fy, fx): (f64, f64) = (rng.random(), rng.random());
                match p.splat {
                    Splat::Nearest => img[[r, c]] += 1.0,
                    Splat::Bilinear => {
                        // Pixel centres sit at +0.5; distances to the lower-left centre.
                        let y = r as f64 + fy - 0.5;
                        let x = c as f64 + fx - 0.5;
                        let (y0, x0) = (y.floor(), x.floor());
                        let (ty, tx) = (y - y0, x - x0);
                        let wrap = |v: f64| (v as i64).rem_euclid(n as i64) as usize;
                        for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
                            for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                                img[[wrap(y0 + dy), wrap(x0 + dx)]] += wy * wx;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((img.mapv(T::lit), lambda))
}

pub fn sample_cox<T: Real>(spec: &ProcessSpec) -> Result<Array2<T>> {
    Ok(sample_cox_with_intensity(spec)?.0)
}
