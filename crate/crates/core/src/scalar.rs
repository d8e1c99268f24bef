//! Floating-point scalar abstraction shared by every numerical module.

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rustfft::FftNum;
use std::iter::Sum;

/// Real scalar type the library is generic over: `f32` or `f64`.
///
/// The bound collects what the FFT engine, `ndarray` linear algebra and the
/// binary file formats need. Note that both `num_traits::Float` and
/// `num_traits::Signed` provide `abs`/`signum`; call them as `Float::abs(x)`
/// in generic code.
pub trait Real: NdFloat + FftNum + FromPrimitive + Sum + Default {
    /// Token written into file headers (`f32` or `f64`).
    const DTYPE: &'static str;
    /// Encoded width in bytes.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Converts an `f64` literal, used for constants in generic code.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(b)
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(b)
    }
}
