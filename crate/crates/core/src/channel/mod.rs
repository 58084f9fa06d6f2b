//! Dual-polarization fiber propagation.
//!
//! The field obeys the Manakov equation
//!
//! ```text
//! dA/dz = -(alpha/2) A - i (beta2/2) d²A/dt² + i (8/9) gamma (|Ax|² + |Ay|²) A
//! ```
//!
//! solved with the split-step Fourier method. Spans of standard single-mode
//! fiber are followed by an EDFA that restores the span loss and adds ASE.
//!
//! Frequency-domain conventions follow [`crate::fft`]: the forward transform
//! uses `exp(-i ω t)`, so `d²/dt²` becomes `-ω²` and the linear operator over
//! a length `dz` is `exp(+i (beta2/2) ω² dz - (alpha/2) dz)`.

mod edfa;
mod ssfm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::signal::DualPolWaveform;

pub use edfa::{ase_variance_per_pol, edfa_amplify, photon_energy, spontaneous_emission_factor};
pub use ssfm::{dispersion_halfstep, nonlinear_step, ssfm_span, SpanSolver};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Manakov averaging factor on the Kerr term.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    /// Nonlinearity coefficient, 1/(W·km).
    pub gamma: f64,
    /// Dispersion parameter, ps/(nm·km).
    pub dispersion_d: f64,
    pub alpha_db_per_km: f64,
    pub span_length_km: f64,
    /// Reference wavelength for the β₂ conversion and photon energy.
    pub wavelength_nm: f64,
}

impl Default for FiberParams {
    /// Standard single-mode fiber, 50 km spans at 1550 nm.
    fn default() -> Self {
        FiberParams {
            gamma: 1.2,
            dispersion_d: 16.8,
            alpha_db_per_km: 0.21,
            span_length_km: 50.0,
            wavelength_nm: 1550.0,
        }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config("fiber.gamma", "must be positive"));
        }
        if !(self.span_length_km > 0.0) {
            return Err(Error::config("fiber.span_length_km", "must be positive"));
        }
        if !(self.alpha_db_per_km >= 0.0) {
            return Err(Error::config("fiber.alpha_db_per_km", "must be non-negative"));
        }
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::config("fiber.wavelength_nm", "must be positive"));
        }
        if !self.dispersion_d.is_finite() {
            return Err(Error::config("fiber.dispersion_d", "must be finite"));
        }
        Ok(())
    }

    /// β₂ in s²/m.
    pub fn beta2(&self) -> f64 {
        beta2_from_d(self.dispersion_d, self.wavelength_nm)
    }

    /// Field attenuation uses `alpha/2`; this returns the power coefficient
    /// in 1/m.
    pub fn alpha_per_m(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    /// 1/(W·m).
    pub fn gamma_per_m(&self) -> f64 {
        self.gamma / 1e3
    }

    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.span_length_km
    }

    pub fn span_length_m(&self) -> f64 {
        self.span_length_km * 1e3
    }
}

/// `beta2 = -D λ² / (2 π c)` with `D` in ps/(nm·km) and `λ` in nm; result in
/// s²/m.
pub fn beta2_from_d(d_ps_nm_km: f64, wavelength_nm: f64) -> f64 {
    let d_si = d_ps_nm_km * 1e-6; // ps/(nm·km) -> s/m²
    let lambda = wavelength_nm * 1e-9;
    -d_si * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierParams {
    pub noise_figure_db: f64,
    pub gain_db: f64,
    /// When false the amplifier is noiseless (debug and invariance checks).
    #[serde(default = "default_true")]
    pub ase: bool,
}

fn default_true() -> bool {
    true
}

impl AmplifierParams {
    /// Amplifier whose gain exactly compensates one span of `fiber`.
    pub fn for_span(fiber: &FiberParams, noise_figure_db: f64) -> Self {
        AmplifierParams {
            noise_figure_db,
            gain_db: fiber.span_loss_db(),
            ase: true,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.ase = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_figure_db >= 3.0) {
            return Err(Error::config(
                "amplifier.noise_figure_db",
                "must be at least 3 dB (quantum limit)",
            ));
        }
        if !(self.gain_db >= 0.0) {
            return Err(Error::config("amplifier.gain_db", "must be non-negative"));
        }
        Ok(())
    }

    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.gain_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsfmConfig {
    /// Nominal (maximum) step, km.
    pub step_km: f64,
    /// Symmetric (Strang) splitting when true, first-order otherwise.
    pub symmetric: bool,
    /// Cap on the nonlinear phase rotation per step, rad.
    pub max_nonlinear_phase_rad: f64,
}

impl Default for SsfmConfig {
    fn default() -> Self {
        SsfmConfig {
            step_km: 0.5,
            symmetric: true,
            max_nonlinear_phase_rad: 3e-3,
        }
    }
}

impl SsfmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_km > 0.0) {
            return Err(Error::config("ssfm.step_km", "must be positive"));
        }
        if !(self.max_nonlinear_phase_rad > 0.0 && self.max_nonlinear_phase_rad <= 0.1) {
            return Err(Error::config(
                "ssfm.max_nonlinear_phase_rad",
                "must lie in (0, 0.1]",
            ));
        }
        Ok(())
    }
}

/// Everything needed to push a waveform through a multi-span link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub fiber: FiberParams,
    pub amplifier: AmplifierParams,
    pub ssfm: SsfmConfig,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let fiber = FiberParams::default();
        LinkConfig {
            fiber,
            amplifier: AmplifierParams::for_span(&fiber, 4.5),
            ssfm: SsfmConfig::default(),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.amplifier.validate()?;
        self.ssfm.validate()?;
        let loss = self.fiber.span_loss_db();
        if (self.amplifier.gain_db - loss).abs() > 1e-9 * loss.max(1.0) {
            return Err(Error::config(
                "amplifier.gain_db",
                format!(
                    "gain {} dB must equal the span loss {} dB",
                    self.amplifier.gain_db, loss
                ),
            ));
        }
        Ok(())
    }

    pub fn total_length_km(&self, n_spans: usize) -> f64 {
        self.fiber.span_length_km * n_spans as f64
    }

    /// Lossless, noiseless, linear variant of this link.
    pub fn linear_only(mut self) -> Self {
        self.fiber.gamma = f64::MIN_POSITIVE;
        self.amplifier.ase = false;
        self
    }
}

/// Propagate through `n_spans` × (fiber span, EDFA). ASE in span `i` draws
/// from a stream derived from `(seed, i)`.
pub fn propagate_link(
    w: DualPolWaveform,
    n_spans: usize,
    link: &LinkConfig,
    seed: u64,
) -> Result<DualPolWaveform> {
    let mut out = propagate_link_tapped(w, &[n_spans], link, seed)?;
    Ok(out.pop().expect("one tap requested"))
}

/// Propagate once to the largest entry of `taps` and return a copy of the
/// field after each requested span count, in the order given. Equal to
/// calling [`propagate_link`] separately for every tap with the same seed.
pub fn propagate_link_tapped(
    mut w: DualPolWaveform,
    taps: &[usize],
    link: &LinkConfig,
    seed: u64,
) -> Result<Vec<DualPolWaveform>> {
    link.validate()?;
    if taps.is_empty() || taps.iter().any(|&n| n == 0) {
        return Err(Error::InvalidLength("span counts must be at least 1".into()));
    }
    let max = *taps.iter().max().expect("nonempty");
    let mut solver = SpanSolver::new(&w, &link.fiber, &link.ssfm)?;
    let mut snapshots: Vec<Option<DualPolWaveform>> = vec![None; taps.len()];
    for span in 0..max {
        solver.propagate(&mut w);
        edfa_amplify(&mut w, &link.amplifier, &link.fiber, rng::derive(seed, stream::ASE, span as u64));
        log::trace!("span {} of {} done", span + 1, max);
        for (slot, &n) in snapshots.iter_mut().zip(taps) {
            if n == span + 1 {
                *slot = Some(w.clone());
            }
        }
    }
    Ok(snapshots.into_iter().map(|s| s.expect("tap reached")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta2_conversion() {
        assert_eq!(beta2_from_d(0.0, 1550.0), 0.0);
        // mpmath, 40 digits: -2.142752975151589551e-26
        let b = beta2_from_d(16.8, 1550.0);
        assert!((b / -2.142_752_975_151_589_6e-26 - 1.0).abs() < 1e-12, "{b}");
        assert!(beta2_from_d(1.0, 1310.0) < 0.0);
        assert!(beta2_from_d(-1.0, 1310.0) > 0.0);
    }

    #[test]
    fn total_distance() {
        assert_eq!(LinkConfig::default().total_length_km(50), 2500.0);
    }

    #[test]
    fn validation() {
        assert!(LinkConfig::default().validate().is_ok());
        let mut l = LinkConfig::default();
        l.amplifier.gain_db = 3.0;
        assert!(l.validate().is_err());
        let mut l = LinkConfig::default();
        l.amplifier.noise_figure_db = 2.9;
        assert!(l.validate().is_err());
        let mut l = LinkConfig::default();
        l.ssfm.max_nonlinear_phase_rad = 0.2;
        assert!(l.validate().is_err());
        let mut l = LinkConfig::default();
        l.fiber.gamma = 0.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn span_loss() {
        let f = FiberParams::default();
        assert!((f.span_loss_db() - 10.5).abs() < 1e-12);
        // 0.21 dB/km in nepers: 0.21 ln10/10 per km
        assert!((f.alpha_per_m() - 4.835_428_695_287_496e-5).abs() < 1e-15);
    }
}
