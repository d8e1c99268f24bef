//! Oriented complex wavelet filter banks built directly on the discrete
//! frequency grid.
//!
//! Each band-pass filter is a Gaussian bump in log-radius times a Gaussian
//! bump in angle (a log-polar Morlet-type profile). Radial bumps sit one
//! octave apart and are normalized by their log-periodic sum, so the family
//! is exactly dilation covariant; angular bumps are normalized the same way
//! over the `K` orientations and their antipodes, so the family is exactly
//! rotation covariant by multiples of `pi/K`. The finest band keeps a flat
//! radial profile above its centre frequency so the corners of the spectrum
//! are covered. The lowpass is a periodized Gaussian (a sampled positive
//! Gaussian in space) with unit DC gain.
//!
//! Nyquist rows/columns of an even grid alias `+pi` and `-pi`. Filters are
//! evaluated there on the representative facing their centre frequency and
//! then rescaled so the symmetrized Littlewood–Paley sum does not double
//! count the aliased sample.
//!
//! All responses are real-valued and non-negative in frequency; the spatial
//! filters are complex (analytic). Convolutions elsewhere in the crate are
//! circular products with these grids.

use crate::error::{Error, Result};
use crate::fft::{angular_frequency, neg_index, Fft2};
use crate::Real;
use ndarray::Array2;
use std::f64::consts::{LN_2, PI};

/// Shape parameters of the wavelet family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveletShape {
    /// Centre frequency of the finest band (`j = 1`), radians/sample.
    pub carrier: f64,
    /// Standard deviation of each band in natural-log radius.
    pub bandwidth: f64,
    /// Angular standard deviation as a fraction of the orientation spacing `pi/K`.
    pub slant: f64,
    /// Spatial standard deviation of the lowpass in units of `2^J`.
    pub lowpass_sigma: f64,
}

impl Default for WaveletShape {
    fn default() -> Self {
        Self {
            carrier: 0.6 * PI,
            bandwidth: 0.7,
            slant: 0.67,
            lowpass_sigma: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterBank<T: Real> {
    width: usize,
    height: usize,
    scales: usize,
    orientations: usize,
    shape: WaveletShape,
    gain: f64,
    psi_hat: Vec<Array2<T>>,
    phi_hat: Array2<T>,
    epsilon_lp: T,
    fft: Fft2<T>,
    fft_sub: Fft2<T>,
}

/// Littlewood–Paley sum over the grid with its extrema.
#[derive(Clone, Debug)]
pub struct LpProfile<T: Real> {
    pub min_value: T,
    pub max_value: T,
    pub profile: Array2<T>,
}

/// Builds a bank of `scales * orientations` band-pass filters plus one lowpass.
///
/// `width` and `height` must be powers of two and `scales <= log2(min(width, height))`.
pub fn build_filter_bank<T: Real>(
    width: usize,
    height: usize,
    scales: usize,
    orientations: usize,
    shape: WaveletShape,
) -> Result<FilterBank<T>> {
    for d in [width, height] {
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(d));
        }
    }
    let max_j = width.min(height).trailing_zeros() as usize;
    if scales == 0 || scales > max_j {
        return Err(Error::ScaleTooLarge {
            j: scales,
            width,
            height,
        });
    }
    if orientations == 0 {
        return Err(Error::InvalidArgument("orientation count must be >= 1".into()));
    }
    if !(shape.carrier > 0.0 && shape.bandwidth > 0.0 && shape.slant > 0.0 && shape.lowpass_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("non-positive wavelet shape {shape:?}")));
    }
    Ok(build_unchecked(width, height, scales, orientations, shape))
}

/// Construction without argument validation; `scales == 0` yields a
/// lowpass-only bank.
pub(crate) fn build_unchecked<T: Real>(
    width: usize,
    height: usize,
    scales: usize,
    orientations: usize,
    shape: WaveletShape,
) -> FilterBank<T> {
    let proto = Prototype { shape, orientations };
    let n_filters = scales * orientations;

    let sigma_phi = shape.lowpass_sigma * (1u64 << scales) as f64;
    let phi = Array2::from_shape_fn((height, width), |(r, c)| {
        periodized_gaussian(angular_frequency(r, height), angular_frequency(c, width), sigma_phi)
    });
    let phi0 = phi[[0, 0]];
    let phi = phi.mapv(|v| v / phi0);

    let mut psi: Vec<Array2<f64>> = Vec::with_capacity(n_filters);
    for j in 1..=scales {
        for k in 1..=orientations {
            let theta = proto.orientation(k);
            let (cs, sn) = (theta.cos(), theta.sin());
            psi.push(Array2::from_shape_fn((height, width), |(r, c)| {
                let (wy, wx) = facing_representative(r, c, height, width, cs, sn);
                proto.response(j, k, wy, wx)
            }));
        }
    }

    // Rescale aliased Nyquist samples so the symmetrized sum there matches
    // the partition of unity, then pick the largest global gain keeping the
    // Littlewood–Paley sum <= 1.
    let lp_psi = symmetrized_sum(&psi, (height, width));
    let nyq_r = (height % 2 == 0).then_some(height / 2);
    let nyq_c = (width % 2 == 0).then_some(width / 2);
    for r in 0..height {
        for c in 0..width {
            let on_nyquist = Some(r) == nyq_r || Some(c) == nyq_c;
            let s = lp_psi[[r, c]];
            if on_nyquist && s > 1e-14 {
                let f = ((1.0 - phi[[r, c]].powi(2)).max(0.0) / s).sqrt();
                for p in psi.iter_mut() {
                    p[[r, c]] *= f;
                }
            }
        }
    }
    let lp_psi = symmetrized_sum(&psi, (height, width));
    let mut gain2: f64 = 1.0;
    for (s, f) in lp_psi.iter().zip(phi.iter()) {
        if *s > 1e-14 {
            gain2 = gain2.min((1.0 - f * f).max(0.0) / s);
        }
    }
    let gain = gain2.sqrt();
    for p in psi.iter_mut() {
        p.mapv_inplace(|v| v * gain);
    }
    let lp_min = lp_psi
        .iter()
        .zip(phi.iter())
        .map(|(s, f)| f * f + gain2 * s)
        .fold(f64::INFINITY, f64::min);

    let stride = 1usize << scales;
    FilterBank {
        width,
        height,
        scales,
        orientations,
        shape,
        gain,
        psi_hat: psi.into_iter().map(|p| p.mapv(T::lit)).collect(),
        phi_hat: phi.mapv(T::lit),
        epsilon_lp: T::lit((1.0 - lp_min).max(0.0)),
        fft: Fft2::new(height, width),
        fft_sub: Fft2::new(height / stride, width / stride),
    }
}

impl<T: Real> FilterBank<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of dyadic scales `J`.
    pub fn scales(&self) -> usize {
        self.scales
    }

    /// Number of orientations `K`.
    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn shape(&self) -> WaveletShape {
        self.shape
    }

    /// Littlewood–Paley slack achieved on this grid.
    pub fn epsilon_lp(&self) -> T {
        self.epsilon_lp
    }

    /// Subsampling step `2^J` applied after the final lowpass.
    pub fn stride(&self) -> usize {
        1 << self.scales
    }

    /// `(height, width)` of one subsampled coefficient block.
    pub fn subsampled_shape(&self) -> (usize, usize) {
        (self.height / self.stride(), self.width / self.stride())
    }

    /// Frequency response of band `j in 1..=J`, orientation `k in 1..=K`.
    pub fn psi(&self, j: usize, k: usize) -> &Array2<T> {
        &self.psi_hat[self.filter_index(j, k)]
    }

    pub fn phi(&self) -> &Array2<T> {
        &self.phi_hat
    }

    pub(crate) fn filter_index(&self, j: usize, k: usize) -> usize {
        assert!((1..=self.scales).contains(&j) && (1..=self.orientations).contains(&k));
        (j - 1) * self.orientations + (k - 1)
    }

    pub(crate) fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    pub(crate) fn fft_sub(&self) -> &Fft2<T> {
        &self.fft_sub
    }

    /// Orientation angle `(k-1) pi / K`.
    pub fn orientation_angle(&self, k: usize) -> f64 {
        Prototype {
            shape: self.shape,
            orientations: self.orientations,
        }
        .orientation(k)
    }

    /// Continuous response of band `(j, k)` at an arbitrary frequency
    /// `(wy, wx)`, including the global gain but without the Nyquist
    /// treatment applied on the grid.
    pub fn wavelet_response(&self, j: usize, k: usize, wy: f64, wx: f64) -> f64 {
        self.gain
            * Prototype {
                shape: self.shape,
                orientations: self.orientations,
            }
            .response(j, k, wy, wx)
    }

    /// Fraction of the energy of band `(j, k)` lying in the half-plane
    /// opposite its centre frequency. Aliased Nyquist samples count as
    /// facing the centre.
    pub fn opposite_half_plane_energy(&self, j: usize, k: usize) -> f64 {
        let theta = self.orientation_angle(k);
        let (cs, sn) = (theta.cos(), theta.sin());
        let p = self.psi(j, k);
        let (mut total, mut opposite) = (0.0, 0.0);
        for ((r, c), v) in p.indexed_iter() {
            let e = v.to_f64_lossy().powi(2);
            total += e;
            let (wy, wx) = facing_representative(r, c, self.height, self.width, cs, sn);
            if wx * cs + wy * sn < 0.0 {
                opposite += e;
            }
        }
        if total > 0.0 {
            opposite / total
        } else {
            0.0
        }
    }
}

/// `|phi(w)|^2 + 1/2 sum_{j,k} (|psi_jk(w)|^2 + |psi_jk(-w)|^2)` on the grid.
pub fn littlewood_paley_profile<T: Real>(fb: &FilterBank<T>) -> LpProfile<T> {
    let (h, w) = (fb.height, fb.width);
    let half = T::lit(0.5);
    let profile = Array2::from_shape_fn((h, w), |(r, c)| {
        let (nr, nc) = (neg_index(r, h), neg_index(c, w));
        let mut s = fb.phi_hat[[r, c]].powi(2);
        for p in &fb.psi_hat {
            s += half * (p[[r, c]].powi(2) + p[[nr, nc]].powi(2));
        }
        s
    });
    let min_value = profile.iter().copied().fold(T::infinity(), T::min);
    let max_value = profile.iter().copied().fold(T::neg_infinity(), T::max);
    LpProfile {
        min_value,
        max_value,
        profile,
    }
}

fn symmetrized_sum(psi: &[Array2<f64>], (h, w): (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (nr, nc) = (neg_index(r, h), neg_index(c, w));
        psi.iter()
            .map(|p| 0.5 * (p[[r, c]].powi(2) + p[[nr, nc]].powi(2)))
            .sum()
    })
}

/// Grid frequency of `(r, c)`, choosing `+pi` or `-pi` on Nyquist lines so
/// that the point faces direction `(cs, sn)`.
fn facing_representative(r: usize, c: usize, h: usize, w: usize, cs: f64, sn: f64) -> (f64, f64) {
    let mut wy = angular_frequency(r, h);
    let mut wx = angular_frequency(c, w);
    if h % 2 == 0 && r == h / 2 {
        wy = if sn > 1e-12 { PI } else { -PI };
    }
    if w % 2 == 0 && c == w / 2 {
        wx = if cs > 1e-12 { PI } else { -PI };
    }
    (wy, wx)
}

pub(crate) fn periodized_gaussian(wy: f64, wx: f64, sigma: f64) -> f64 {
    let mut acc = 0.0;
    for a in -2..=2 {
        for b in -2..=2 {
            let y = wy + 2.0 * PI * a as f64;
            let x = wx + 2.0 * PI * b as f64;
            acc += (-0.5 * sigma * sigma * (x * x + y * y)).exp();
        }
    }
    acc
}

#[inline]
fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

struct Prototype {
    shape: WaveletShape,
    orientations: usize,
}

impl Prototype {
    fn orientation(&self, k: usize) -> f64 {
        (k - 1) as f64 * PI / self.orientations as f64
    }

    fn response(&self, j: usize, k: usize, wy: f64, wx: f64) -> f64 {
        let r = wx.hypot(wy);
        if r == 0.0 {
            return 0.0;
        }
        let alpha = wy.atan2(wx);
        self.radial(j, (r / self.shape.carrier).ln()) * self.angular(alpha, self.orientation(k))
    }

    /// Band `j` profile at log-radius `lr = ln(r / carrier)`.
    fn radial(&self, j: usize, lr: f64) -> f64 {
        let s = self.shape.bandwidth;
        let bump2 = |t: f64| (-(t * t) / (s * s)).exp();
        // Bump m is centred at lr = -m ln2; only |lr + m ln2| < 9 s matters.
        let lo = (-(lr + 9.0 * s) / LN_2).floor() as i64;
        let hi = ((9.0 * s - lr) / LN_2).ceil() as i64;
        let mut total = 0.0;
        let mut finer = 0.0;
        for m in lo..=hi {
            let b = bump2(lr + m as f64 * LN_2);
            total += b;
            if m <= 0 {
                finer += b;
            }
        }
        if total <= 0.0 {
            return 0.0;
        }
        if j == 1 {
            (finer / total).sqrt()
        } else {
            let t = lr + (j - 1) as f64 * LN_2;
            (-0.5 * t * t / (s * s)).exp() / total.sqrt()
        }
    }

    fn angular(&self, alpha: f64, theta: f64) -> f64 {
        let k = self.orientations;
        let sd = self.shape.slant * PI / k as f64;
        let g2 = |d: f64| (-(d * d) / (sd * sd)).exp();
        let mut norm = 0.0;
        for kk in 1..=k {
            let t = self.orientation(kk);
            norm += 0.5 * (g2(wrap_angle(alpha - t)) + g2(wrap_angle(alpha + PI - t)));
        }
        let d = wrap_angle(alpha - theta);
        (-0.5 * d * d / (sd * sd)).exp() / norm.sqrt()
    }
}
