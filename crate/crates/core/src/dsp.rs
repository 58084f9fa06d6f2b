//! Receiver-side linear compensation and conditioning.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{angular_frequencies, FftPair};
use crate::signal::DualPolWaveform;

/// Reported EVM when the error vector is exactly zero.
pub const EVM_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdcConfig {
    pub total_length_m: f64,
    /// s²/m
    pub beta2: f64,
}

/// Chromatic dispersion compensation: multiply every bin by
/// `exp(-i (beta2/2) ω² L)`, the inverse of the accumulated lossless
/// dispersion. Runs at the channel sampling rate.
pub fn cdc(w: &mut DualPolWaveform, cfg: &CdcConfig) -> Result<()> {
    if cfg.total_length_m < 0.0 {
        return Err(Error::config("cdc.total_length_m", "must be non-negative"));
    }
    if cfg.total_length_m == 0.0 || w.is_empty() {
        return Ok(());
    }
    let omega = angular_frequencies(w.len(), w.sample_rate);
    let h: Vec<Complex64> = omega
        .iter()
        .map(|&om| Complex64::from_polar(1.0, -0.5 * cfg.beta2 * om * om * cfg.total_length_m))
        .collect();
    let mut fft = FftPair::new(w.len());
    for pol in [&mut w.x, &mut w.y] {
        fft.forward(pol);
        for (v, hk) in pol.iter_mut().zip(&h) {
            *v *= hk;
        }
        fft.inverse(pol);
    }
    Ok(())
}

/// Per-polarization gain and phase applied by [`normalize_symbols`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub scale_x: f64,
    pub scale_y: f64,
    /// Degrees.
    pub rotation_x_deg: f64,
    /// Degrees.
    pub rotation_y_deg: f64,
}

impl NormRecord {
    pub const IDENTITY: NormRecord = NormRecord {
        scale_x: 1.0,
        scale_y: 1.0,
        rotation_x_deg: 0.0,
        rotation_y_deg: 0.0,
    };

    /// Record equivalent to applying `self` then `next`.
    pub fn then(&self, next: &NormRecord) -> NormRecord {
        let wrap = |d: f64| (d + 180.0).rem_euclid(360.0) - 180.0;
        NormRecord {
            scale_x: self.scale_x * next.scale_x,
            scale_y: self.scale_y * next.scale_y,
            rotation_x_deg: wrap(self.rotation_x_deg + next.rotation_x_deg),
            rotation_y_deg: wrap(self.rotation_y_deg + next.rotation_y_deg),
        }
    }
}

fn normalize_one(rx: &[Complex64], tx: &[Complex64], pol: &str) -> Result<(Vec<Complex64>, f64, f64)> {
    if rx.is_empty() {
        return Err(Error::InvalidLength(format!("{pol}: empty symbol sequence")));
    }
    if rx.len() != tx.len() {
        return Err(Error::InvalidLength(format!(
            "{pol}: {} received vs {} reference symbols",
            rx.len(),
            tx.len()
        )));
    }
    let power = rx.iter().map(|s| s.norm_sqr()).sum::<f64>() / rx.len() as f64;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::DegenerateInput(format!("{pol}: received symbols carry no power")));
    }
    let scale = 1.0 / power.sqrt();
    let corr: Complex64 = rx.iter().zip(tx).map(|(r, t)| r * t.conj()).sum();
    let phi = if corr.norm() > 0.0 { -corr.arg() } else { 0.0 };
    let rot = Complex64::from_polar(scale, phi);
    Ok((rx.iter().map(|s| s * rot).collect(), scale, phi.to_degrees()))
}

/// Scale each polarization to unit mean power and remove the common phase
/// that best aligns it with the known transmitted symbols.
pub fn normalize_symbols(
    rx_x: &[Complex64],
    rx_y: &[Complex64],
    tx_x: &[Complex64],
    tx_y: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>, NormRecord)> {
    let (nx, sx, px) = normalize_one(rx_x, tx_x, "x")?;
    let (ny, sy, py) = normalize_one(rx_y, tx_y, "y")?;
    Ok((
        nx,
        ny,
        NormRecord {
            scale_x: sx,
            scale_y: sy,
            rotation_x_deg: px,
            rotation_y_deg: py,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMetrics {
    pub evm_db: f64,
    pub error_vector: Vec<Complex64>,
}

/// EVM `10 log10(E|rx - tx|² / E|tx|²)` and the per-symbol error vector.
pub fn residual_distortion_metrics(rx: &[Complex64], tx: &[Complex64]) -> Result<DistortionMetrics> {
    if rx.len() != tx.len() {
        return Err(Error::InvalidLength(format!(
            "EVM needs equal lengths, got {} and {}",
            rx.len(),
            tx.len()
        )));
    }
    if rx.is_empty() {
        return Err(Error::InvalidLength("EVM of an empty sequence".into()));
    }
    let error_vector: Vec<Complex64> = rx.iter().zip(tx).map(|(r, t)| r - t).collect();
    let e: f64 = error_vector.iter().map(|d| d.norm_sqr()).sum();
    let p: f64 = tx.iter().map(|t| t.norm_sqr()).sum();
    if !(p > 0.0) {
        return Err(Error::DegenerateInput("reference symbols carry no power".into()));
    }
    let evm_db = if e == 0.0 {
        EVM_FLOOR_DB
    } else {
        (10.0 * (e / p).log10()).max(EVM_FLOOR_DB)
    };
    Ok(DistortionMetrics { evm_db, error_vector })
}

pub fn evm_db(rx: &[Complex64], tx: &[Complex64]) -> Result<f64> {
    residual_distortion_metrics(rx, tx).map(|m| m.evm_db)
}
