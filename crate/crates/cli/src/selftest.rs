//! Fast invariant checks run by `mtleq selftest`.

use std::time::{Duration, Instant};

use mtleq::channel::{propagate_link, AmplifierParams, FiberParams, LinkConfig, SsfmConfig};
use mtleq::dsp::{cdc, evm_db, normalize_symbols, CdcConfig};
use mtleq::eval::q_factor_from_ber;
use mtleq::nn::{EqualizerModel, ModelConfig};
use mtleq::rng;
use mtleq::signal::{generate_frame, matched_filter_and_downsample, set_launch_power, shape_pulse, PulseShapeConfig};
use mtleq::Result;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Flip the sign of the CDC dispersion (mutation check of the suite).
    pub sabotage_cdc_sign: bool,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: String,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<22} {:>14}  {:<18} {}\n", "check", "value", "limit", "result");
        for c in &self.checks {
            s += &format!(
                "{:<22} {:>14.6e}  {:<18} {}\n",
                c.name,
                c.value,
                c.limit,
                if c.passed { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

pub const SOFT_BUDGET: Duration = Duration::from_secs(300);

/// Relative energy drift over 10 lossless, noiseless spans.
pub fn energy_drift() -> Result<f64> {
    let fiber = FiberParams { alpha_db_per_km: 0.0, ..Default::default() };
    let link = LinkConfig {
        fiber,
        amplifier: AmplifierParams::for_span(&fiber, 4.5).noiseless(),
        ssfm: SsfmConfig::default(),
    };
    let frame = generate_frame(1024, 17);
    let w = set_launch_power(shape_pulse(&frame, &PulseShapeConfig::default(), 40e9)?, 5.0)?;
    let e0 = w.energy();
    let out = propagate_link(w, 10, &link, 17)?;
    Ok(((out.energy() - e0) / e0).abs())
}

/// EVM after a 10-span linear link, CDC, matched filter and normalization.
pub fn cdc_inversion_evm(sabotage: bool) -> Result<f64> {
    let link = LinkConfig::default().linear_only();
    let pulse = PulseShapeConfig::default();
    let n = 2048;
    let frame = generate_frame(n, 23);
    let w = set_launch_power(shape_pulse(&frame, &pulse, 40e9)?, 0.0)?;
    let mut w = propagate_link(w, 10, &link, 23)?;
    let sign = if sabotage { -1.0 } else { 1.0 };
    cdc(
        &mut w,
        &CdcConfig {
            total_length_m: link.fiber.span_length_m() * 10.0,
            beta2: sign * link.fiber.beta2(),
        },
    )?;
    let (x, y) = matched_filter_and_downsample(&w, &pulse, n)?;
    let (x, _, _) = normalize_symbols(&x, &y, &frame.x_symbols, &frame.y_symbols)?;
    // reference scaled to unit power like the received symbols
    let p = frame.x_symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let tx: Vec<_> = frame.x_symbols.iter().map(|s| s / p.sqrt()).collect();
    evm_db(&x, &tx)
}

/// Worst relative error of BPTT against central differences on a
/// 2-layer, H=4, window-9 model.
pub fn gradient_error(seed: u64) -> Result<f64> {
    let cfg = ModelConfig { n_layers: 2, hidden: 4, input_features: 4, window: 9, output_dim: 2 };
    let mut m = EqualizerModel::new(cfg, seed)?;
    let mut r = rng::rng(seed ^ 0x5eed);
    for v in m.params_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let f: Vec<f64> = (0..3 * 36).map(|_| r.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    m.gradient_check(&f, &t, 1e-5)
}

/// Q(1e-3) and whether Q strictly decreases over a 100-point BER grid.
pub fn q_oracle() -> Result<(f64, bool)> {
    let q = q_factor_from_ber(1e-3)?;
    let grid: Vec<f64> = (0..100).map(|k| 10f64.powf(-9.0 + 8.69 * k as f64 / 99.0)).collect();
    let qs = grid.iter().map(|&b| q_factor_from_ber(b)).collect::<Result<Vec<f64>>>()?;
    Ok((q, qs.windows(2).all(|w| w[1] < w[0])))
}

/// Independent high-precision value of `20 log10(sqrt(2) erfc⁻¹(0.002))`.
pub const Q_AT_1E3: f64 = 9.799_822_569;

pub fn run_selftest(opts: SelftestOptions) -> Result<SelftestReport> {
    let t0 = Instant::now();
    let mut checks = Vec::new();
    let e = energy_drift()?;
    checks.push(Check { name: "energy conservation", value: e, limit: "< 1e-9".into(), passed: e < 1e-9 });
    let evm = cdc_inversion_evm(opts.sabotage_cdc_sign)?;
    checks.push(Check { name: "CDC inversion EVM dB", value: evm, limit: "< -40".into(), passed: evm < -40.0 });
    let g = gradient_error(3)?;
    checks.push(Check { name: "gradient check", value: g, limit: "< 1e-4".into(), passed: g < 1e-4 });
    let (q, monotone) = q_oracle()?;
    checks.push(Check {
        name: "Q(BER=1e-3) dB",
        value: q,
        limit: "9.80 +/- 0.01".into(),
        passed: (q - Q_AT_1E3).abs() < 0.01 && monotone,
    });
    let elapsed = t0.elapsed();
    if elapsed > SOFT_BUDGET {
        log::warn!("selftest took {:.0} s, over the {} s budget", elapsed.as_secs_f64(), SOFT_BUDGET.as_secs());
    }
    Ok(SelftestReport { checks, elapsed })
}
