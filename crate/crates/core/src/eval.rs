//! Bit error counting, Q-factor conversion and equalizer sweeps.
//!
//! The Q-factor is the Gaussian-equivalent figure
//! `Q_dB = 20 log10(sqrt(2) erfc⁻¹(2 BER))`, computed from directly counted
//! errors on the X polarization.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    append_windows, generate_scenario_data_tapped, power_feature, ModeKind, Scenario, ScenarioData, SimConfig,
};
use crate::error::{Error, Result};
use crate::nn::{EqualizerModel, Precision};
use crate::rng::Namespace;
use crate::signal::demap_16qam_hard;

/// Fraction of differing positions between two bit streams.
pub fn ber(tx_bits: &[u8], rx_bits: &[u8]) -> Result<f64> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::InvalidLength(format!(
            "{} transmitted bits against {} received",
            tx_bits.len(),
            rx_bits.len()
        )));
    }
    if tx_bits.is_empty() {
        return Err(Error::InvalidLength("no bits to compare".into()));
    }
    Ok(bit_errors(tx_bits, rx_bits) as f64 / tx_bits.len() as f64)
}

fn bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Inverse complementary error function on `(0, 2)`.
///
/// Newton iteration on `ln erfc(x) = ln y`, which is close to linear in the
/// tail, started from `sqrt(-ln y)` or the first-order expansion around 0.
pub fn erfc_inv(y: f64) -> f64 {
    if !(y > 0.0 && y < 2.0) {
        return f64::NAN;
    }
    if y > 1.0 {
        return -erfc_inv(2.0 - y);
    }
    if y == 1.0 {
        return 0.0;
    }
    let target = y.ln();
    let mut x = if y < 0.3 {
        (-target).sqrt()
    } else {
        (1.0 - y) / FRAC_2_SQRT_PI
    };
    for _ in 0..100 {
        let e = libm::erfc(x);
        let slope = -FRAC_2_SQRT_PI * (-x * x).exp() / e;
        let dx = (e.ln() - target) / slope;
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Q-factor in dB for `0 < ber < 0.5`.
pub fn q_factor_from_ber(ber: f64) -> Result<f64> {
    if ber.is_nan() || ber >= 0.5 {
        return Err(Error::QUndefined(ber));
    }
    if ber <= 0.0 {
        return Err(Error::DegenerateInput(
            "BER is zero; use q_factor_counted to apply the clamp".into(),
        ));
    }
    Ok(20.0 * (std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber)).log10())
}

/// Inverse of [`q_factor_from_ber`].
pub fn ber_from_q_factor(q_db: f64) -> f64 {
    0.5 * libm::erfc(10f64.powf(q_db / 20.0) / std::f64::consts::SQRT_2)
}

/// Q-factor with the zero-error clamp applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QFactor {
    pub q_db: f64,
    /// BER fed to the conversion: the measured one, or `1/(2 n_bits)`.
    pub ber_used: f64,
    pub clamped: bool,
}

/// Q-factor from an error count. Zero errors are replaced by half an error.
pub fn q_factor_counted(errors: u64, n_bits: u64) -> Result<QFactor> {
    if n_bits == 0 {
        return Err(Error::InvalidLength("no bits counted".into()));
    }
    let (ber_used, clamped) = if errors == 0 {
        (1.0 / (2.0 * n_bits as f64), true)
    } else {
        (errors as f64 / n_bits as f64, false)
    };
    Ok(QFactor {
        q_db: q_factor_from_ber(ber_used)?,
        ber_used,
        clamped,
    })
}

/// Series label of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CDC")]
    Cdc,
    #[serde(rename = "STL")]
    Stl,
    #[serde(rename = "MTL_Spans")]
    MtlSpans,
    #[serde(rename = "MTL_Power")]
    MtlPower,
    #[serde(rename = "MTL_Rate")]
    MtlRate,
    #[serde(rename = "MTL_Universal")]
    MtlUniversal,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cdc,
        Method::Stl,
        Method::MtlSpans,
        Method::MtlPower,
        Method::MtlRate,
        Method::MtlUniversal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cdc => "CDC",
            Method::Stl => "STL",
            Method::MtlSpans => "MTL_Spans",
            Method::MtlPower => "MTL_Power",
            Method::MtlRate => "MTL_Rate",
            Method::MtlUniversal => "MTL_Universal",
        }
    }

    /// Label for a model trained in `mode`.
    pub fn for_mode(mode: ModeKind) -> Method {
        match mode {
            ModeKind::StlFixed => Method::Stl,
            ModeKind::MtlSpans => Method::MtlSpans,
            ModeKind::MtlPower => Method::MtlPower,
            ModeKind::MtlRate => Method::MtlRate,
            ModeKind::Universal => Method::MtlUniversal,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("method", format!("unknown method `{s}`")))
    }
}

/// What is applied after CDC and matched filtering.
#[derive(Debug, Clone, Copy)]
pub enum Equalizer<'a> {
    /// Hard decisions straight on the CDC output.
    Cdc,
    Model(&'a EqualizerModel),
}

impl Equalizer<'_> {
    fn window(&self) -> usize {
        match self {
            Equalizer::Cdc => 1,
            Equalizer::Model(m) => m.config().window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub sim: SimConfig,
    pub precision: Precision,
    /// Smallest accepted number of evaluated symbols.
    pub min_symbols: usize,
    /// Windows per prediction block; bounds memory, not results.
    pub block: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            sim: SimConfig::default(),
            precision: Precision::F32,
            min_symbols: 10_000,
            block: 8192,
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub method: Method,
    pub scenario: Scenario,
    pub q_db: f64,
    /// Measured BER (0 when clamped).
    pub ber: f64,
    pub n_symbols_evaluated: usize,
    pub clamped: bool,
}

fn check_eval_seed(seed: u64) -> Result<()> {
    match Namespace::of(seed) {
        Some(Namespace::Eval) => Ok(()),
        _ => Err(Error::config(
            "seeds.eval",
            format!("seed {seed:#018x} does not carry the evaluation namespace"),
        )),
    }
}

/// Decisions on `n` symbols centered in `data`, whose length is
/// `n + pad - 1`.
fn equalize(eq: &Equalizer<'_>, data: &ScenarioData, n: usize, pad: usize, opts: &EvalOptions) -> Result<Vec<u8>> {
    let c_pad = pad / 2;
    match eq {
        Equalizer::Cdc => Ok(demap_16qam_hard(&data.rx_x[c_pad..c_pad + n])),
        Equalizer::Model(m) => {
            let w = m.config().window;
            let lo = c_pad - w / 2;
            let rx_x = &data.rx_x[lo..lo + n + w - 1];
            let rx_y = &data.rx_y[lo..lo + n + w - 1];
            let tx_x = &data.tx_x[lo..lo + n + w - 1];
            let power = (m.config().input_features == 5).then(|| power_feature(data.scenario.p_dbm) as f32);
            let block = opts.block.max(1);
            let mut symbols: Vec<Complex64> = Vec::with_capacity(n);
            let mut feats = Vec::new();
            let mut targets = Vec::new();
            let mut start = 0;
            while start < n {
                let b = block.min(n - start);
                let span = start..start + b + w - 1;
                feats.clear();
                targets.clear();
                append_windows(&rx_x[span.clone()], &rx_y[span.clone()], &tx_x[span], w, power, &mut feats, &mut targets)?;
                symbols.extend(m.predict(&feats, opts.precision)?);
                start += b;
            }
            Ok(demap_16qam_hard(&symbols))
        }
    }
}

fn score(method: Method, eq: &Equalizer<'_>, data: &ScenarioData, n: usize, pad: usize, opts: &EvalOptions) -> Result<SweepResult> {
    let rx_bits = equalize(eq, data, n, pad, opts)?;
    let c = pad / 2;
    let tx_bits = &data.bits_x[4 * c..4 * (c + n)];
    let errors = bit_errors(tx_bits, &rx_bits);
    let n_bits = tx_bits.len() as u64;
    let q = q_factor_counted(errors, n_bits)?;
    Ok(SweepResult {
        method,
        scenario: data.scenario,
        q_db: q.q_db,
        ber: errors as f64 / n_bits as f64,
        n_symbols_evaluated: n,
        clamped: q.clamped,
    })
}

fn check_model(eq: &Equalizer<'_>) -> Result<()> {
    if let Equalizer::Model(m) = eq {
        m.config().validate()?;
    }
    Ok(())
}

/// Evaluate several equalizers on the same fresh frame at several span
/// counts taken from one propagation. `scenario.seed` must carry the
/// evaluation namespace. Results are ordered tap-major, then by equalizer.
pub fn evaluate_tapped(
    equalizers: &[(Method, Equalizer<'_>)],
    scenario: &Scenario,
    taps: &[u32],
    n_symbols: usize,
    opts: &EvalOptions,
) -> Result<Vec<SweepResult>> {
    check_eval_seed(scenario.seed)?;
    if n_symbols < opts.min_symbols {
        return Err(Error::config(
            "eval.n_symbols",
            format!("{n_symbols} is below the floor of {}", opts.min_symbols),
        ));
    }
    for (_, eq) in equalizers {
        check_model(eq)?;
    }
    let pad = equalizers.iter().map(|(_, e)| e.window()).max().unwrap_or(1);
    let data = generate_scenario_data_tapped(scenario, taps, n_symbols + pad - 1, &opts.sim)?;
    let jobs: Vec<(&ScenarioData, &(Method, Equalizer<'_>))> =
        data.iter().flat_map(|d| equalizers.iter().map(move |e| (d, e))).collect();
    jobs.par_iter()
        .map(|(d, (method, eq))| score(*method, eq, d, n_symbols, pad, opts))
        .collect()
}

/// Evaluate one equalizer on a fresh frame of `scenario`.
pub fn evaluate(
    method: Method,
    eq: Equalizer<'_>,
    scenario: &Scenario,
    n_symbols: usize,
    opts: &EvalOptions,
) -> Result<SweepResult> {
    let mut r = evaluate_tapped(&[(method, eq)], scenario, &[scenario.n_spans], n_symbols, opts)?;
    Ok(r.pop().expect("one result"))
}

/// The scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Spans,
    Power,
    Rate,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Spans, Axis::Power, Axis::Rate];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Spans => "spans",
            Axis::Power => "power",
            Axis::Rate => "rate",
        }
    }
}

/// Evaluate every equalizer at every grid point of `axis`, the other two
/// parameters taken from `fixed`. All points share the frame seed
/// `fixed.seed`, so methods and points see the same transmitted bits.
/// Span sweeps run one propagation tapped at each grid value. Rows are
/// ordered by grid index, then by equalizer.
pub fn sweep(
    equalizers: &[(Method, Equalizer<'_>)],
    axis: Axis,
    fixed: &Scenario,
    grid: &[f64],
    n_symbols: usize,
    opts: &EvalOptions,
) -> Result<Vec<SweepResult>> {
    if grid.is_empty() {
        return Err(Error::config("sweep.grid", "must not be empty"));
    }
    match axis {
        Axis::Spans => {
            let taps = grid
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                        Ok(v as u32)
                    } else {
                        Err(Error::config("sweep.grid", format!("{v} is not a span count")))
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            evaluate_tapped(equalizers, fixed, &taps, n_symbols, opts)
        }
        Axis::Power | Axis::Rate => {
            let parts: Vec<Result<Vec<SweepResult>>> = grid
                .par_iter()
                .map(|&v| {
                    let mut s = *fixed;
                    if axis == Axis::Power {
                        s.p_dbm = v;
                    } else {
                        s.rs_gbd = v;
                    }
                    evaluate_tapped(equalizers, &s, &[s.n_spans], n_symbols, opts)
                })
                .collect();
            let mut out = Vec::with_capacity(grid.len() * equalizers.len());
            for p in parts {
                out.extend(p?);
            }
            Ok(out)
        }
    }
}

pub const CSV_HEADER: [&str; 8] = ["method", "p_dbm", "rs_gbd", "n_spans", "n_symbols", "ber", "q_db", "seed"];

/// Write rows with a header.
pub fn write_csv<W: Write>(rows: &[SweepResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.method.name().to_string(),
            r.scenario.p_dbm.to_string(),
            r.scenario.rs_gbd.to_string(),
            r.scenario.n_spans.to_string(),
            r.n_symbols_evaluated.to_string(),
            r.ber.to_string(),
            format!("{:.6}", r.q_db),
            r.scenario.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    #[test]
    fn ber_cases() {
        let a = vec![0u8, 1, 1, 0];
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        let comp: Vec<u8> = a.iter().map(|b| 1 - b).collect();
        assert_eq!(ber(&a, &comp).unwrap(), 1.0);
        let mut b = vec![0u8; 1000];
        let c = b.clone();
        b[417] = 1;
        assert_eq!(ber(&b, &c).unwrap(), 0.001);
        assert!(matches!(ber(&a, &a[..3]), Err(Error::InvalidLength(_))));
        assert!(ber(&[], &[]).is_err());
    }

    #[test]
    fn q_oracle_values() {
        // mpmath, 30 digits
        for (ber, q) in [
            (1e-3, 9.799_822_569),
            (1e-2, 7.333_493_163),
            (1e-4, 11.408_562_070),
            (0.1, 2.154_721_710),
        ] {
            let got = q_factor_from_ber(ber).unwrap();
            assert!((got - q).abs() < 1e-8, "{ber}: {got}");
        }
        let q49 = q_factor_from_ber(0.49).unwrap();
        assert!(q49 < -20.0 && (q49 + 32.0173).abs() < 1e-3, "{q49}");
    }

    #[test]
    fn erfc_inverse_is_tight() {
        for y in [1e-300, 1e-30, 1e-9, 2e-3, 0.3, 0.999, 1.0, 1.4, 1.999_999] {
            let x = erfc_inv(y);
            let back = libm::erfc(x);
            assert!(((back - y) / y).abs() < 1e-12, "y={y} x={x} back={back}");
        }
        assert!(erfc_inv(0.0).is_nan() && erfc_inv(2.0).is_nan());
    }

    #[test]
    fn q_domain_and_clamp() {
        assert!(matches!(q_factor_from_ber(0.5), Err(Error::QUndefined(_))));
        assert!(matches!(q_factor_from_ber(0.7), Err(Error::QUndefined(_))));
        assert!(matches!(q_factor_from_ber(0.0), Err(Error::DegenerateInput(_))));
        let q = q_factor_counted(0, 400_000).unwrap();
        assert!(q.clamped);
        assert_eq!(q.ber_used, 1.25e-6);
        let q = q_factor_counted(40, 40_000).unwrap();
        assert!(!q.clamped && (q.q_db - 9.799_822_569).abs() < 1e-8);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::for_mode(ModeKind::Universal), Method::MtlUniversal);
        assert!("LMS".parse::<Method>().is_err());
    }

    fn eval_scenario(n_spans: u32) -> Scenario {
        Scenario::new(0.0, 40.0, n_spans, Namespace::Eval.tag_seed(11))
    }

    #[test]
    fn training_seeds_are_refused() {
        let s = Scenario::new(0.0, 40.0, 1, Namespace::Train.tag_seed(11));
        let e = evaluate(Method::Cdc, Equalizer::Cdc, &s, 10_000, &EvalOptions::default());
        assert!(matches!(e, Err(Error::Config { field, .. }) if field == "seeds.eval"));
        let e = evaluate(Method::Cdc, Equalizer::Cdc, &eval_scenario(1), 100, &EvalOptions::default());
        assert!(matches!(e, Err(Error::Config { field, .. }) if field == "eval.n_symbols"));
    }

    #[test]
    fn linear_channel_triggers_the_clamp() {
        let opts = EvalOptions {
            sim: SimConfig::default().linear_only(),
            ..Default::default()
        };
        let r = evaluate(Method::Cdc, Equalizer::Cdc, &eval_scenario(3), 10_000, &opts).unwrap();
        assert_eq!(r.ber, 0.0);
        assert!(r.clamped);
        assert!((r.q_db - q_factor_from_ber(1.0 / 80_000.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic_and_aligned() {
        let opts = EvalOptions {
            min_symbols: 500,
            block: 77,
            precision: Precision::F64,
            ..Default::default()
        };
        let cfg = ModelConfig { n_layers: 1, hidden: 3, input_features: 5, window: 7, output_dim: 2 };
        let m = EqualizerModel::new(cfg, 4).unwrap();
        let eqs = [(Method::Cdc, Equalizer::Cdc), (Method::MtlPower, Equalizer::Model(&m))];
        let a = evaluate_tapped(&eqs, &eval_scenario(1), &[1, 2], 500, &opts).unwrap();
        let b = evaluate_tapped(&eqs, &eval_scenario(1), &[1, 2], 500, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a.iter().map(|r| r.scenario.n_spans).collect::<Vec<_>>(), [1, 1, 2, 2]);
        // the CDC row must not depend on which models ride along
        let alone = evaluate_tapped(&eqs[..1], &eval_scenario(1), &[1, 2], 500, &opts).unwrap();
        assert_eq!(alone[0].q_db, a[0].q_db);
        assert_eq!(alone[1].q_db, a[2].q_db);
        // block size does not change predictions
        let one_block = EvalOptions { block: 10_000, ..opts };
        assert_eq!(evaluate_tapped(&eqs, &eval_scenario(1), &[1, 2], 500, &one_block).unwrap(), a);
    }

    #[test]
    fn sweep_shapes_and_csv() {
        let opts = EvalOptions { min_symbols: 200, ..Default::default() };
        let fixed = eval_scenario(1);
        let eqs = [(Method::Cdc, Equalizer::Cdc)];
        let rows = sweep(&eqs, Axis::Power, &fixed, &[-1.0, 2.0, 5.0], 200, &opts).unwrap();
        assert_eq!(rows.iter().map(|r| r.scenario.p_dbm).collect::<Vec<_>>(), [-1.0, 2.0, 5.0]);
        assert!(sweep(&eqs, Axis::Spans, &fixed, &[1.5], 200, &opts).is_err());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,p_dbm,rs_gbd,n_spans,n_symbols,ber,q_db,seed");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("CDC,-1,40,1,200,"));
    }
}
