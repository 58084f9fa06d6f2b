use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::{AmplifierParams, FiberParams, PLANCK, SPEED_OF_LIGHT};
use crate::rng::{self, stream};
use crate::signal::DualPolWaveform;

/// `n_sp = 10^(NF/10) / 2`.
pub fn spontaneous_emission_factor(noise_figure_db: f64) -> f64 {
    10f64.powf(noise_figure_db / 10.0) / 2.0
}

/// `h ν` at the given wavelength, J.
pub fn photon_energy(wavelength_nm: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// ASE power added to each polarization over `bandwidth_hz`:
/// `(G - 1) h ν n_sp B`.
pub fn ase_variance_per_pol(amp: &AmplifierParams, wavelength_nm: f64, bandwidth_hz: f64) -> f64 {
    let g = amp.gain_linear();
    (g - 1.0) * photon_energy(wavelength_nm) * spontaneous_emission_factor(amp.noise_figure_db) * bandwidth_hz
}

/// Amplify by `G` in power and add white circular Gaussian ASE over the whole
/// simulation bandwidth (the sample rate).
pub fn edfa_amplify(w: &mut DualPolWaveform, amp: &AmplifierParams, fiber: &FiberParams, seed: u64) {
    w.scale(amp.gain_linear().sqrt());
    if !amp.ase {
        return;
    }
    let var = ase_variance_per_pol(amp, fiber.wavelength_nm, w.sample_rate);
    if var == 0.0 {
        return;
    }
    let sigma = (0.5 * var).sqrt();
    for (i, pol) in [&mut w.x, &mut w.y].into_iter().enumerate() {
        let mut r = rng::rng(rng::derive(seed, stream::ASE, i as u64));
        for v in pol.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            *v += Complex64::new(sigma * re, sigma * im);
        }
    }
}
