use mtleq::channel::{dispersion_halfstep, nonlinear_step, propagate_link, AmplifierParams, FiberParams, LinkConfig, SsfmConfig};
use mtleq::dataset::{build_windows, generate_epoch, EpochConfig, ModeKind, SamplerMode, ScenarioGrid, SimConfig};
use mtleq::dsp::{cdc, evm_db, normalize_symbols, CdcConfig};
use mtleq::eval::{ber_from_q_factor, q_factor_from_ber};
use mtleq::nn::{train_epoch, EqualizerModel, ModelConfig, Precision, TrainConfig};
use mtleq::signal::{
    generate_frame, map_bits_to_16qam, matched_filter_and_downsample, set_launch_power, shape_pulse, demap_16qam_hard,
    DualPolWaveform, PulseShapeConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn waveform(n_symbols: usize, seed: u64, p_dbm: f64) -> DualPolWaveform {
    let frame = generate_frame(n_symbols, seed);
    set_launch_power(shape_pulse(&frame, &PulseShapeConfig::default(), 40e9).unwrap(), p_dbm).unwrap()
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn demap_inverts_map(bits in prop::collection::vec(0u8..2, 4..400)) {
        let bits = &bits[..bits.len() / 4 * 4];
        prop_assert_eq!(demap_16qam_hard(&map_bits_to_16qam(bits).unwrap()), bits.to_vec());
    }

    #[test]
    fn shaping_round_trip_is_transparent(seed in any::<u64>()) {
        let frame = generate_frame(256, seed);
        let w = shape_pulse(&frame, &PulseShapeConfig::default(), 40e9).unwrap();
        let (x, y) = matched_filter_and_downsample(&w, &PulseShapeConfig::default(), 256).unwrap();
        prop_assert!(evm_db(&x, &frame.x_symbols).unwrap() < -40.0);
        prop_assert!(evm_db(&y, &frame.y_symbols).unwrap() < -40.0);
    }

    #[test]
    fn launch_power_is_exact(seed in any::<u64>(), p in -10.0f64..10.0) {
        let w = waveform(128, seed, p);
        prop_assert!((w.mean_power_dbm() - p).abs() < 1e-9);
    }

    #[test]
    fn cdc_inverts_dispersion(seed in any::<u64>(), beta2 in -3e-26f64..3e-26, km in 0.0f64..3000.0) {
        let w0 = waveform(256, seed, 0.0);
        let mut w = w0.clone();
        dispersion_halfstep(&mut w, beta2, 0.0, km * 1e3);
        let e = w.energy();
        cdc(&mut w, &CdcConfig { total_length_m: km * 1e3, beta2 }).unwrap();
        prop_assert!(((w.energy() - e) / e).abs() < 1e-12);
        prop_assert!(rel_l2(&w.x, &w0.x) < 1e-10);
        prop_assert!(rel_l2(&w.y, &w0.y) < 1e-10);
    }

    #[test]
    fn kerr_step_is_phase_only(seed in any::<u64>(), p in -5.0f64..20.0, dz in 1.0f64..5e4) {
        let w0 = waveform(128, seed, p);
        let mut w = w0.clone();
        nonlinear_step(&mut w, 1.2, dz);
        for (a, b) in w.x.iter().chain(&w.y).zip(w0.x.iter().chain(&w0.y)) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-12 * b.norm().max(1e-3));
        }
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), g in 0.01f64..100.0, phi in -3.1f64..3.1) {
        let f = generate_frame(300, seed);
        let rot = Complex64::from_polar(g, phi);
        let rx: Vec<Complex64> = f.x_symbols.iter().map(|s| s * rot).collect();
        let ry: Vec<Complex64> = f.y_symbols.iter().map(|s| s * rot.conj()).collect();
        let (x1, y1, r1) = normalize_symbols(&rx, &ry, &f.x_symbols, &f.y_symbols).unwrap();
        let (x2, y2, r2) = normalize_symbols(&x1, &y1, &f.x_symbols, &f.y_symbols).unwrap();
        prop_assert!(rel_l2(&x2, &x1) < 1e-12 && rel_l2(&y2, &y1) < 1e-12);
        prop_assert!((r2.scale_x - 1.0).abs() < 1e-12 && r2.rotation_x_deg.abs() < 1e-9);
        let total = r1.then(&r2);
        prop_assert!((total.scale_x - r1.scale_x).abs() < 1e-12 * r1.scale_x);
        prop_assert!((total.rotation_y_deg - r1.rotation_y_deg).abs() < 1e-9);
    }

    #[test]
    fn q_factor_decreases_and_inverts(a in 1e-12f64..0.4999, b in 1e-12f64..0.4999) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(q_factor_from_ber(lo).unwrap() > q_factor_from_ber(hi).unwrap());
        let back = ber_from_q_factor(q_factor_from_ber(a).unwrap());
        prop_assert!(((back - a) / a).abs() < 1e-9);
    }

    #[test]
    fn window_target_is_center_symbol(seed in any::<u64>(), half in 0usize..6, n in 1usize..40) {
        let w = 2 * half + 1;
        let f = generate_frame(n + w - 1, seed);
        let ex = build_windows(&f.x_symbols, &f.y_symbols, &f.x_symbols, w, None).unwrap();
        prop_assert_eq!(ex.len(), n);
        for (i, e) in ex.iter().enumerate() {
            let row = e.row(half);
            prop_assert_eq!([row[0], row[1]], e.target);
            prop_assert_eq!(row[0], f.x_symbols[i + half].re as f32);
            prop_assert_eq!(row[3], f.y_symbols[i + half].im as f32);
        }
    }

    #[test]
    fn time_mirror_commutes_with_direction_swap(seed in any::<u64>(), layers in 1usize..4) {
        let cfg = ModelConfig { n_layers: layers, hidden: 3, input_features: 4, window: 7, output_dim: 2 };
        let m = EqualizerModel::new(cfg, seed).unwrap();
        let mut s = m.clone();
        s.swap_directions();
        let x: Vec<f64> = (0..28).map(|k| ((k as f64 + seed as f64 % 97.0) * 0.37).sin()).collect();
        let rev: Vec<f64> = x.chunks(4).rev().flatten().copied().collect();
        let a = m.bilstm_stack_forward(&x).unwrap();
        let b = s.bilstm_stack_forward(&rev).unwrap();
        for (l, (la, lb)) in a.iter().zip(&b).enumerate() {
            for t in 0..7 {
                let ra = &la[t * 6..t * 6 + 6];
                let rb = &lb[(6 - t) * 6..(6 - t) * 6 + 6];
                for k in 0..3 {
                    let tol = if l == 0 { 0.0 } else { 1e-14 };
                    prop_assert!((ra[k] - rb[k + 3]).abs() <= tol);
                    prop_assert!((ra[k + 3] - rb[k]).abs() <= tol);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lossless_link_conserves_energy(seed in any::<u64>(), spans in 1usize..11, p in -2.0f64..8.0) {
        let fiber = FiberParams { alpha_db_per_km: 0.0, span_length_km: 5.0, ..Default::default() };
        let link = LinkConfig {
            fiber,
            amplifier: AmplifierParams::for_span(&fiber, 4.5).noiseless(),
            ssfm: SsfmConfig::default(),
        };
        let w = waveform(256, seed, p);
        let e = w.energy();
        let out = propagate_link(w, spans, &link, seed).unwrap();
        prop_assert!(((out.energy() - e) / e).abs() < 1e-9);
    }
}

fn small_mode() -> (SamplerMode, EpochConfig, ModelConfig) {
    let mut mode = SamplerMode::full(ModeKind::MtlSpans);
    mode.grid = ScenarioGrid { n_spans: vec![1, 2], ..ScenarioGrid::desk() };
    let ecfg = EpochConfig { window: 5, epoch_size: 120, subframe_examples: 40, power_feature: false };
    let mcfg = ModelConfig { n_layers: 2, hidden: 3, input_features: 4, window: 5, output_dim: 2 };
    (mode, ecfg, mcfg)
}

#[test]
fn epochs_never_share_scenario_seeds() {
    let (mode, ecfg, _) = small_mode();
    let sim = SimConfig::default();
    let mut seen = std::collections::HashSet::new();
    for e in 0..4 {
        let ds = generate_epoch(&mode, &ecfg, &sim, e, 21).unwrap();
        for r in &ds.scenarios {
            assert!(seen.insert(r.scenario.seed), "epoch {e} reuses a seed");
        }
    }
}

#[test]
fn training_is_independent_of_thread_count() {
    let (mode, ecfg, mcfg) = small_mode();
    let ds = generate_epoch(&mode, &ecfg, &SimConfig::default(), 0, 8).unwrap();
    let tcfg = TrainConfig { batch_size: 40, chunk_size: 7, precision: Precision::F32, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut m = EqualizerModel::new(mcfg, 2).unwrap();
            train_epoch(&mut m, &ds, &tcfg).unwrap();
            m
        })
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.params(), three.params());
    assert_eq!(one.adam, three.adam);
    // data generation is thread-count independent as well
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| generate_epoch(&mode, &ecfg, &SimConfig::default(), 0, 8).unwrap());
    assert_eq!(again, ds);
}
