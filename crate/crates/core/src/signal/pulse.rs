//! Root-raised-cosine shaping and matched filtering.
//!
//! Both filters run as circular convolutions over the whole frame so the
//! transmitter and receiver agree with the periodic boundary used by the
//! fiber solver. The filter is zero-phase (centered), so the TX/RX pair has
//! no group delay to undo: symbol `k` sits at sample `k * sps`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use super::{DualPolWaveform, PulseShapeConfig, SymbolFrame};
use crate::error::{Error, Result};

/// Centered RRC taps, `filter_span_symbols * sps + 1` long, scaled so that
/// `sum(h^2) == sps`. With that scaling an upsampled unit-power symbol stream
/// produces a unit-power waveform.
pub fn rrc_taps(cfg: &PulseShapeConfig) -> Vec<f64> {
    let sps = cfg.sps_tx;
    let beta = cfg.rolloff;
    let half = cfg.filter_span_symbols * sps / 2;
    let mut taps: Vec<f64> = (0..=2 * half)
        .map(|i| rrc_at((i as f64 - half as f64) / sps as f64, beta))
        .collect();
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = (sps as f64 / energy).sqrt();
    for h in taps.iter_mut() {
        *h *= scale;
    }
    taps
}

/// Unnormalized RRC impulse response at `t` symbol periods.
fn rrc_at(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let singular = 1.0 / (4.0 * beta);
    if (t.abs() - singular).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

fn shape_one(symbols: &[Complex64], taps: &[f64], sps: usize) -> Vec<Complex64> {
    let len = symbols.len() * sps;
    let half = taps.len() / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    if len == 0 {
        return out;
    }
    for (k, &s) in symbols.iter().enumerate() {
        let start = (k * sps + len * (half / len + 1) - half) % len;
        let mut idx = start;
        for &h in taps {
            out[idx] += s * h;
            idx += 1;
            if idx == len {
                idx = 0;
            }
        }
    }
    out
}

pub fn shape_pulse(frame: &SymbolFrame, cfg: &PulseShapeConfig, symbol_rate: f64) -> Result<DualPolWaveform> {
    cfg.validate()?;
    let taps = rrc_taps(cfg);
    let sps = cfg.sps_tx;
    Ok(DualPolWaveform {
        x: shape_one(&frame.x_symbols, &taps, sps),
        y: shape_one(&frame.y_symbols, &taps, sps),
        sample_rate: symbol_rate * sps as f64,
        symbol_rate,
        sps,
    })
}

fn matched_one(samples: &[Complex64], taps: &[f64], sps: usize, n_symbols: usize) -> Vec<Complex64> {
    let len = samples.len();
    let half = taps.len() / 2;
    let gain = 1.0 / sps as f64;
    (0..n_symbols)
        .map(|k| {
            let mut idx = (k * sps + len * (half / len + 1) - half) % len;
            let mut acc = Complex64::new(0.0, 0.0);
            for &h in taps {
                acc += samples[idx] * h;
                idx += 1;
                if idx == len {
                    idx = 0;
                }
            }
            acc * gain
        })
        .collect()
}

/// Matched filter and sample at the symbol centers. Returns the first
/// `n_symbols` symbols of each polarization.
pub fn matched_filter_and_downsample(
    w: &DualPolWaveform,
    cfg: &PulseShapeConfig,
    n_symbols: usize,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    cfg.validate()?;
    if w.sps != cfg.sps_tx {
        return Err(Error::Shape(format!(
            "waveform has {} samples/symbol, filter expects {}",
            w.sps, cfg.sps_tx
        )));
    }
    if n_symbols * w.sps > w.len() {
        return Err(Error::InvalidLength(format!(
            "{} symbols requested but waveform holds only {}",
            n_symbols,
            w.len() / w.sps
        )));
    }
    let taps = rrc_taps(cfg);
    Ok((
        matched_one(&w.x, &taps, w.sps, n_symbols),
        matched_one(&w.y, &taps, w.sps, n_symbols),
    ))
}

/// Circular lag (in symbols) that best aligns `rx` to `tx`, searched over
/// `-max_lag..=max_lag`. A positive value means `rx` lags `tx`.
pub fn estimate_symbol_delay(rx: &[Complex64], tx: &[Complex64], max_lag: usize) -> Result<isize> {
    if rx.len() != tx.len() || rx.is_empty() {
        return Err(Error::InvalidLength(format!(
            "alignment needs equal nonempty lengths, got {} and {}",
            rx.len(),
            tx.len()
        )));
    }
    let n = rx.len() as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    let max_lag = max_lag.min(rx.len() - 1) as isize;
    for lag in -max_lag..=max_lag {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, t) in tx.iter().enumerate() {
            let j = (k as isize + lag).rem_euclid(n) as usize;
            acc += rx[j] * t.conj();
        }
        if acc.norm() > best.1 {
            best = (lag, acc.norm());
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::evm_db;
    use crate::fft::FftPair;
    use crate::signal::generate_frame;

    fn cfg() -> PulseShapeConfig {
        PulseShapeConfig::default()
    }

    #[test]
    fn taps_are_symmetric_with_sps_energy() {
        let c = cfg();
        let h = rrc_taps(&c);
        assert_eq!(h.len(), 32 * 8 + 1);
        for i in 0..h.len() {
            assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-14);
        }
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 8.0).abs() < 1e-10);
    }

    #[test]
    fn impulse_reproduces_filter() {
        let c = cfg();
        let n = 64;
        let mut frame = generate_frame(n, 3);
        for s in frame.x_symbols.iter_mut() {
            *s = Complex64::new(0.0, 0.0);
        }
        frame.x_symbols[n / 2] = Complex64::new(1.0, 0.0);
        let w = shape_pulse(&frame, &c, 40e9).unwrap();
        let h = rrc_taps(&c);
        let half = h.len() / 2;
        let center = n / 2 * c.sps_tx;
        for (j, &hv) in h.iter().enumerate() {
            let v = w.x[center + j - half];
            assert!((v.re - hv).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn shaped_power_matches_symbol_power() {
        let frame = generate_frame(4096, 11);
        let w = shape_pulse(&frame, &cfg(), 40e9).unwrap();
        let ps: f64 = frame.x_symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / 4096.0;
        let pw: f64 = w.x.iter().map(|s| s.norm_sqr()).sum::<f64>() / w.x.len() as f64;
        assert!((pw / ps - 1.0).abs() < 1e-3, "{pw} vs {ps}");
    }

    #[test]
    fn spectrum_is_band_limited() {
        // alternating +-(3+3j)/sqrt(10) pushes all energy to the band edge
        let c = cfg();
        let n = 1024;
        let mut frame = generate_frame(n, 1);
        let a = Complex64::new(3.0, 3.0) / 10f64.sqrt();
        for (k, s) in frame.x_symbols.iter_mut().enumerate() {
            *s = if k % 2 == 0 { a } else { -a };
        }
        let rs = 40e9;
        let mut w = shape_pulse(&frame, &c, rs).unwrap();
        let len = w.x.len();
        let mut fft = FftPair::new(len);
        fft.forward(&mut w.x);
        let edge = (1.0 + c.rolloff) * rs / 2.0;
        let df = w.sample_rate / len as f64;
        let (mut inb, mut outb) = (0.0, 0.0);
        for (k, v) in w.x.iter().enumerate() {
            let f = if k < len / 2 { k as f64 } else { k as f64 - len as f64 } * df;
            if f.abs() <= edge * 1.0001 {
                inb += v.norm_sqr();
            } else {
                outb += v.norm_sqr();
            }
        }
        let ratio_db = 10.0 * (outb / inb).log10();
        assert!(ratio_db < -40.0, "out-of-band {ratio_db} dB");
    }

    #[test]
    fn back_to_back_round_trip() {
        let c = cfg();
        for seed in [1u64, 2, 3] {
            let frame = generate_frame(2048, seed);
            let w = shape_pulse(&frame, &c, 40e9).unwrap();
            let (x, y) = matched_filter_and_downsample(&w, &c, 2048).unwrap();
            assert!(evm_db(&x, &frame.x_symbols).unwrap() < -40.0);
            assert!(evm_db(&y, &frame.y_symbols).unwrap() < -40.0);
        }
    }

    #[test]
    fn delay_is_detected() {
        let c = cfg();
        let n = 512;
        let frame = generate_frame(n, 9);
        let mut w = shape_pulse(&frame, &c, 40e9).unwrap();
        let k = 5;
        w.x.rotate_right(k * c.sps_tx);
        let (x, _) = matched_filter_and_downsample(&w, &c, n).unwrap();
        assert_eq!(estimate_symbol_delay(&x, &frame.x_symbols, 20).unwrap(), k as isize);
        let mut shifted = frame.x_symbols.clone();
        shifted.rotate_right(k);
        assert!(evm_db(&x, &shifted).unwrap() < -40.0);
    }

    #[test]
    fn too_many_symbols_rejected() {
        let c = cfg();
        let frame = generate_frame(16, 9);
        let w = shape_pulse(&frame, &c, 40e9).unwrap();
        assert!(matches!(
            matched_filter_and_downsample(&w, &c, 17),
            Err(Error::InvalidLength(_))
        ));
    }
}
