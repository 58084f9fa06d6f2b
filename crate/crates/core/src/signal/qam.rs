//! Gray-mapped square 16-QAM.
//!
//! Each symbol carries four bits `b0 b1 b2 b3`. The first pair selects the
//! in-phase level and the second pair the quadrature level through the same
//! two-bit Gray code:
//!
//! | bits | level |
//! |------|-------|
//! | `00` | -3    |
//! | `01` | -1    |
//! | `11` | +1    |
//! | `10` | +3    |
//!
//! Points are scaled by `1/sqrt(10)` so the 16 equiprobable points have unit
//! mean power. Bits `0000` therefore map to `(-3 - 3j)/sqrt(10)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 4;

/// `1/sqrt(10)`.
pub const SCALE: f64 = 0.316_227_766_016_837_94;

const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];

#[inline]
fn level_from_bits(b0: u8, b1: u8) -> f64 {
    match (b0 & 1, b1 & 1) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

#[inline]
fn bits_from_level_index(idx: usize) -> (u8, u8) {
    match idx {
        0 => (0, 0),
        1 => (0, 1),
        2 => (1, 1),
        _ => (1, 0),
    }
}

/// Index into [`LEVELS`] of the level nearest to `v` (unscaled units).
#[inline]
fn nearest_level(v: f64) -> usize {
    if v < -2.0 {
        0
    } else if v < 0.0 {
        1
    } else if v < 2.0 {
        2
    } else {
        3
    }
}

/// Map one 4-bit word (most significant bit first in `bits[0]`).
#[inline]
pub fn map_word(bits: &[u8]) -> Complex64 {
    Complex64::new(
        level_from_bits(bits[0], bits[1]) * SCALE,
        level_from_bits(bits[2], bits[3]) * SCALE,
    )
}

pub fn map_bits_to_16qam(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(Error::InvalidLength(format!(
            "bit count {} is not a multiple of {BITS_PER_SYMBOL}",
            bits.len()
        )));
    }
    Ok(bits.chunks_exact(BITS_PER_SYMBOL).map(map_word).collect())
}

/// Hard decision on the nearest constellation point. The square grid makes
/// the Euclidean decision separable per rail, so each rail is sliced
/// independently. Non-finite inputs slice to the outermost levels.
pub fn demap_16qam_hard(received: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(received.len() * BITS_PER_SYMBOL);
    for s in received {
        let (i0, i1) = bits_from_level_index(nearest_level(s.re / SCALE));
        let (q0, q1) = bits_from_level_index(nearest_level(s.im / SCALE));
        out.extend_from_slice(&[i0, i1, q0, q1]);
    }
    out
}

/// Nearest constellation point to `s`.
pub fn slice(s: Complex64) -> Complex64 {
    Complex64::new(
        LEVELS[nearest_level(s.re / SCALE)] * SCALE,
        LEVELS[nearest_level(s.im / SCALE)] * SCALE,
    )
}

/// All 16 constellation points, indexed by the 4-bit word value (`b0` is the
/// most significant bit).
pub fn constellation() -> [Complex64; 16] {
    let mut pts = [Complex64::new(0.0, 0.0); 16];
    for (w, p) in pts.iter_mut().enumerate() {
        let bits = word_bits(w as u8);
        *p = map_word(&bits);
    }
    pts
}

pub fn word_bits(w: u8) -> [u8; 4] {
    [(w >> 3) & 1, (w >> 2) & 1, (w >> 1) & 1, w & 1]
}
