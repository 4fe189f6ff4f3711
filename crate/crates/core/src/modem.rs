//! Unit-energy Gray-mapped QPSK, the slicer and the modulo operator.
//!
//! Bit pair `(b0, b1)` maps to `((-1)^b0 + i (-1)^b1) / sqrt(2)`; the symbol
//! index used internally is `2 b0 + b1`.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::numerics::Complex;
use crate::Error;

pub const QPSK_AMPLITUDE: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Modulo period per real dimension: twice the per-dimension decision span
/// of unit-energy QPSK, `2 sqrt(2)`.
pub const QPSK_TAU: f64 = 2.0 * core::f64::consts::SQRT_2;

const POINT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    pub points: [Complex; 4],
    pub bits_per_symbol: usize,
    pub sigma_s2: f64,
    pub tau: f64,
}

impl Default for Constellation {
    fn default() -> Self {
        Self::qpsk()
    }
}

impl Constellation {
    pub fn qpsk() -> Self {
        Self {
            points: [0u8, 1, 2, 3].map(qpsk_point),
            bits_per_symbol: 2,
            sigma_s2: 1.0,
            tau: QPSK_TAU,
        }
    }
}

#[inline]
pub fn qpsk_point(index: u8) -> Complex {
    let re = if index & 2 == 0 { QPSK_AMPLITUDE } else { -QPSK_AMPLITUDE };
    let im = if index & 1 == 0 { QPSK_AMPLITUDE } else { -QPSK_AMPLITUDE };
    Complex::new(re, im)
}

/// Index of the nearest QPSK point; zero components go to the positive side.
#[inline]
pub fn slice_index(y: Complex) -> u8 {
    (((y.re < 0.0) as u8) << 1) | ((y.im < 0.0) as u8)
}

/// Nearest constellation point.
#[inline]
pub fn slice(y: Complex) -> Complex {
    qpsk_point(slice_index(y))
}

pub fn modulate(bits: &[u8]) -> Result<Vec<Complex>, Error> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    Ok(bits.chunks_exact(2).map(|p| qpsk_point(((p[0] & 1) << 1) | (p[1] & 1))).collect())
}

/// Packs bit pairs into symbol indices.
pub fn bits_to_indices(bits: &[u8]) -> Result<Vec<u8>, Error> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    Ok(bits.chunks_exact(2).map(|p| ((p[0] & 1) << 1) | (p[1] & 1)).collect())
}

/// Inverse of the mapping table. Only exact constellation points are accepted.
pub fn demodulate(point: Complex) -> Result<[u8; 2], Error> {
    let on_grid = |x: f64| (x.abs() - QPSK_AMPLITUDE).abs() <= POINT_TOLERANCE;
    if !(on_grid(point.re) && on_grid(point.im)) {
        return Err(Error::NotAConstellationPoint(point));
    }
    let idx = slice_index(point);
    Ok([idx >> 1, idx & 1])
}

/// Wraps each real dimension into `[-tau/2, tau/2)`.
#[inline]
pub fn modulo(v: Complex, tau: f64) -> Complex {
    let wrap = |x: f64| x - tau * (x / tau + 0.5).floor();
    Complex::new(wrap(v.re), wrap(v.im))
}
