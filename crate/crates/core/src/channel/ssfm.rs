use num_complex::Complex64;

use super::{FiberParams, SsfmConfig, MANAKOV_FACTOR};
use crate::error::{Error, Result};
use crate::fft::{angular_frequencies, FftPair};
use crate::signal::DualPolWaveform;

/// Apply the linear (dispersion + loss) operator over `dz` metres to both
/// polarizations. The symmetric scheme calls this with half a step.
pub fn dispersion_halfstep(w: &mut DualPolWaveform, beta2: f64, alpha_per_m: f64, dz: f64) {
    if dz == 0.0 || w.is_empty() {
        return;
    }
    let omega = angular_frequencies(w.len(), w.sample_rate);
    let h = linear_response(&omega, beta2, alpha_per_m, dz);
    let mut fft = FftPair::new(w.len());
    for pol in [&mut w.x, &mut w.y] {
        fft.forward(pol);
        for (v, hk) in pol.iter_mut().zip(&h) {
            *v *= hk;
        }
        fft.inverse(pol);
    }
}

/// `exp(i (beta2/2) ω² dz - (alpha/2) dz)` per bin.
pub(crate) fn linear_response(omega: &[f64], beta2: f64, alpha_per_m: f64, dz: f64) -> Vec<Complex64> {
    let amp = (-0.5 * alpha_per_m * dz).exp();
    omega
        .iter()
        .map(|&w| Complex64::from_polar(amp, 0.5 * beta2 * w * w * dz))
        .collect()
}

/// Manakov Kerr rotation over `dz` metres with `gamma` in 1/(W·km). Both
/// polarizations rotate by `(8/9) gamma (|Ax|² + |Ay|²) dz`.
pub fn nonlinear_step(w: &mut DualPolWaveform, gamma: f64, dz: f64) {
    if dz == 0.0 {
        return;
    }
    let k = MANAKOV_FACTOR * gamma / 1e3 * dz;
    kerr_rotate(&mut w.x, &mut w.y, k);
}

/// Rotates in place and returns the peak of `|x|² + |y|²`, which the
/// rotation leaves unchanged.
#[inline]
fn kerr_rotate(x: &mut [Complex64], y: &mut [Complex64], k: f64) -> f64 {
    let mut peak = 0.0f64;
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let p = a.norm_sqr() + b.norm_sqr();
        peak = peak.max(p);
        let (s, c) = (k * p).sin_cos();
        let r = Complex64::new(c, s);
        *a *= r;
        *b *= r;
    }
    peak
}

/// Propagate one span with a freshly built [`SpanSolver`].
pub fn ssfm_span(w: &mut DualPolWaveform, fiber: &FiberParams, cfg: &SsfmConfig) -> Result<()> {
    let mut solver = SpanSolver::new(w, fiber, cfg)?;
    solver.propagate(w);
    Ok(())
}

/// Reusable split-step propagator for one frame length and sample rate.
///
/// In the symmetric scheme consecutive linear half steps are fused, so every
/// step costs one forward and one inverse FFT per polarization. The step is
/// `min(step_km, cap / ((8/9) gamma P_peak))`, where `P_peak` is the peak
/// power seen at the most recent nonlinear stage (the input peak for the
/// first step). The final step is shortened to land on the span end.
pub struct SpanSolver {
    fft_x: FftPair,
    fft_y: FftPair,
    omega: Vec<f64>,
    beta2: f64,
    alpha: f64,
    gamma_per_m: f64,
    span_m: f64,
    cfg: SsfmConfig,
    cache: Vec<(f64, Vec<Complex64>)>,
    steps_taken: usize,
}

const CACHE_SLOTS: usize = 4;

impl SpanSolver {
    pub fn new(w: &DualPolWaveform, fiber: &FiberParams, cfg: &SsfmConfig) -> Result<Self> {
        cfg.validate()?;
        fiber.validate()?;
        if w.is_empty() || w.y.len() != w.x.len() {
            return Err(Error::InvalidLength(
                "waveform polarizations must be nonempty and equally long".into(),
            ));
        }
        Ok(SpanSolver {
            fft_x: FftPair::new(w.len()),
            fft_y: FftPair::new(w.len()),
            omega: angular_frequencies(w.len(), w.sample_rate),
            beta2: fiber.beta2(),
            alpha: fiber.alpha_per_m(),
            gamma_per_m: fiber.gamma_per_m(),
            span_m: fiber.span_length_m(),
            cfg: *cfg,
            cache: Vec::with_capacity(CACHE_SLOTS),
            steps_taken: 0,
        })
    }

    /// Total number of split steps taken so far.
    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn response(&mut self, dz: f64) -> usize {
        if let Some(i) = self.cache.iter().position(|(len, _)| *len == dz) {
            return i;
        }
        let h = linear_response(&self.omega, self.beta2, self.alpha, dz);
        if self.cache.len() == CACHE_SLOTS {
            self.cache.remove(0);
        }
        self.cache.push((dz, h));
        self.cache.len() - 1
    }

    fn apply_linear(&mut self, w: &mut DualPolWaveform, dz: f64) {
        let i = self.response(dz);
        let h = &self.cache[i].1;
        for (v, hk) in w.x.iter_mut().zip(h) {
            *v *= hk;
        }
        for (v, hk) in w.y.iter_mut().zip(h) {
            *v *= hk;
        }
    }

    fn next_step(&self, z: f64, peak: f64) -> f64 {
        let k = MANAKOV_FACTOR * self.gamma_per_m * peak;
        let capped = if k > 0.0 {
            self.cfg.max_nonlinear_phase_rad / k
        } else {
            f64::INFINITY
        };
        let dz = (self.cfg.step_km * 1e3).min(capped);
        let remaining = self.span_m - z;
        // avoid a sliver of a final step from rounding
        if remaining - dz < 1e-9 * self.span_m {
            remaining
        } else {
            dz
        }
    }

    /// Propagate `w` through one span in place.
    pub fn propagate(&mut self, w: &mut DualPolWaveform) {
        let kerr = MANAKOV_FACTOR * self.gamma_per_m;
        let mut peak = w.peak_power();
        let mut z = 0.0;
        self.fft_x.forward(&mut w.x);
        self.fft_y.forward(&mut w.y);
        let mut pending = 0.0;
        while self.span_m - z > 0.0 {
            let dz = self.next_step(z, peak);
            let lin = if self.cfg.symmetric { pending + 0.5 * dz } else { pending + dz };
            self.apply_linear(w, lin);
            self.fft_x.inverse(&mut w.x);
            self.fft_y.inverse(&mut w.y);
            peak = kerr_rotate(&mut w.x, &mut w.y, kerr * dz);
            self.fft_x.forward(&mut w.x);
            self.fft_y.forward(&mut w.y);
            pending = if self.cfg.symmetric { 0.5 * dz } else { 0.0 };
            z += dz;
            self.steps_taken += 1;
        }
        if pending > 0.0 {
            self.apply_linear(w, pending);
        }
        self.fft_x.inverse(&mut w.x);
        self.fft_y.inverse(&mut w.y);
    }
}
