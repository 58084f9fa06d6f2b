//! Transmitter and receiver front ends: bit generation, 16-QAM mapping,
//! root-raised-cosine shaping, launch power, and matched filtering.

mod pulse;
pub mod qam;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub use pulse::{estimate_symbol_delay, matched_filter_and_downsample, rrc_taps, shape_pulse};
pub use qam::{demap_16qam_hard, map_bits_to_16qam};

/// Transmitted symbols and source bits for both polarizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub x_symbols: Vec<Complex64>,
    pub y_symbols: Vec<Complex64>,
    pub bits_x: Vec<u8>,
    pub bits_y: Vec<u8>,
    pub seed: u64,
}

impl SymbolFrame {
    pub fn len(&self) -> usize {
        self.x_symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_symbols.is_empty()
    }
}

/// Complex baseband field of both polarizations, in units of sqrt(W).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolWaveform {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    /// Hz.
    pub sample_rate: f64,
    /// Hz.
    pub symbol_rate: f64,
    pub sps: usize,
}

impl DualPolWaveform {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sum of `|x|^2 + |y|^2` over all samples.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|s| s.norm_sqr()).sum()
    }

    /// Mean total power (X plus Y) in watts.
    pub fn mean_power(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.energy() / self.len() as f64
        }
    }

    pub fn mean_power_dbm(&self) -> f64 {
        watts_to_dbm(self.mean_power())
    }

    /// Peak of `|x|^2 + |y|^2`.
    pub fn peak_power(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.x.iter_mut().chain(self.y.iter_mut()) {
            *s *= factor;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseShapeConfig {
    pub rolloff: f64,
    pub filter_span_symbols: usize,
    pub sps_tx: usize,
}

impl Default for PulseShapeConfig {
    fn default() -> Self {
        PulseShapeConfig {
            rolloff: 0.1,
            filter_span_symbols: 32,
            sps_tx: 8,
        }
    }
}

impl PulseShapeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::config("pulse.rolloff", "must lie in (0, 1]"));
        }
        if self.filter_span_symbols < 16 || self.filter_span_symbols % 2 != 0 {
            return Err(Error::config(
                "pulse.filter_span_symbols",
                "must be even and at least 16",
            ));
        }
        if self.sps_tx < 2 {
            return Err(Error::config("pulse.sps_tx", "must be at least 2"));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng::rng(seed);
    let mut bits = Vec::with_capacity(n);
    while bits.len() < n {
        let word: u64 = rng.random();
        let take = (n - bits.len()).min(64);
        bits.extend((0..take).map(|i| ((word >> i) & 1) as u8));
    }
    bits
}

/// Uniform i.i.d. bits and their Gray-mapped 16-QAM symbols for both
/// polarizations, fully determined by `seed`.
pub fn generate_frame(n_symbols: usize, seed: u64) -> SymbolFrame {
    let nbits = n_symbols * qam::BITS_PER_SYMBOL;
    let bits_x = random_bits(nbits, rng::derive(seed, stream::BITS_X, 0));
    let bits_y = random_bits(nbits, rng::derive(seed, stream::BITS_Y, 0));
    let x_symbols = map_bits_to_16qam(&bits_x).expect("bit count is a multiple of 4");
    let y_symbols = map_bits_to_16qam(&bits_y).expect("bit count is a multiple of 4");
    SymbolFrame {
        x_symbols,
        y_symbols,
        bits_x,
        bits_y,
        seed,
    }
}

/// Rescale so the mean total power (X plus Y) equals `p_dbm`. The X/Y power
/// split is preserved.
pub fn set_launch_power(mut w: DualPolWaveform, p_dbm: f64) -> Result<DualPolWaveform> {
    let p = w.mean_power();
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::DegenerateInput(
            "cannot set launch power of an all-zero waveform".into(),
        ));
    }
    w.scale((dbm_to_watts(p_dbm) / p).sqrt());
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_deterministic() {
        assert_eq!(generate_frame(4, 1), generate_frame(4, 1));
        assert_ne!(generate_frame(64, 1).bits_x, generate_frame(64, 2).bits_x);
        let f = generate_frame(4, 1);
        assert_eq!(f.bits_x.len(), 16);
        assert_ne!(f.bits_x, f.bits_y);
    }

    #[test]
    fn full_size_frame() {
        let f = generate_frame(1 << 18, 5);
        assert_eq!(f.x_symbols.len(), 1 << 18);
        assert_eq!(f.y_symbols.len(), 1 << 18);
        assert_eq!(f.bits_y.len(), 4 << 18);
        let ones = f.bits_x.iter().filter(|&&b| b == 1).count() as f64 / f.bits_x.len() as f64;
        assert!((ones - 0.5).abs() < 0.005);
    }

    fn waveform() -> DualPolWaveform {
        let f = generate_frame(256, 4);
        shape_pulse(&f, &PulseShapeConfig::default(), 40e9).unwrap()
    }

    #[test]
    fn launch_power_definition() {
        let w = set_launch_power(waveform(), 0.0).unwrap();
        assert!((w.mean_power() - 1e-3).abs() < 1e-15);
        let w = set_launch_power(w, 5.0).unwrap();
        assert!((w.mean_power() - 3.162_277_660_168_379e-3).abs() < 1e-15);
        assert!((w.mean_power_dbm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn launch_power_idempotent_and_split_preserving() {
        let w0 = waveform();
        let split = |w: &DualPolWaveform| {
            let px: f64 = w.x.iter().map(|s| s.norm_sqr()).sum();
            let py: f64 = w.y.iter().map(|s| s.norm_sqr()).sum();
            px / py
        };
        let once = set_launch_power(w0.clone(), 3.0).unwrap();
        let twice = set_launch_power(once.clone(), 3.0).unwrap();
        for (a, b) in once.x.iter().zip(&twice.x) {
            assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-30));
        }
        assert!((split(&w0) - split(&once)).abs() < 1e-12);
    }

    #[test]
    fn zero_waveform_is_degenerate() {
        let mut w = waveform();
        w.scale(0.0);
        assert!(matches!(set_launch_power(w, 0.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn config_validation() {
        assert!(PulseShapeConfig::default().validate().is_ok());
        let bad = PulseShapeConfig { rolloff: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PulseShapeConfig { filter_span_symbols: 15, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PulseShapeConfig { sps_tx: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
