//! Scenario sampling, end-to-end data generation, sliding windows, and the
//! on-disk epoch format.

mod io;
mod pipeline;
mod scenario;
mod windows;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::NormRecord;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub use io::{dataset_digest, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use pipeline::{
    generate_scenario_data, generate_scenario_data_tapped, guard_symbols, ScenarioData, SimConfig,
};
pub use scenario::{
    sample_scenario, FixedAxes, ModeKind, SamplerMode, Scenario, ScenarioBounds, ScenarioGrid,
};
pub use windows::{build_windows, power_feature, WindowedExample};
pub(crate) use windows::append_windows;

/// Center and half-range (dB) of the power-feature map.
pub const POWER_NORM: [f64; 2] = [2.0, 3.0];

/// Size and layout of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochConfig {
    /// Symbols per input window (odd).
    pub window: usize,
    /// Examples per epoch.
    pub epoch_size: usize,
    /// Examples drawn from one scenario before a new one is sampled.
    pub subframe_examples: usize,
    /// Append the normalized launch power as a fifth feature.
    pub power_feature: bool,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            window: 141,
            epoch_size: 1 << 18,
            subframe_examples: 1 << 14,
            power_feature: false,
        }
    }
}

impl EpochConfig {
    pub fn n_features(&self) -> usize {
        4 + self.power_feature as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::config("model.window", "must be odd and positive"));
        }
        if self.epoch_size == 0 {
            return Err(Error::config("training.epoch_size", "must be at least 1"));
        }
        if self.subframe_examples == 0 {
            return Err(Error::config("training.subframe_examples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Scenario of one sub-frame with the normalization applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioRecord {
    pub scenario: Scenario,
    pub norm: NormRecord,
}

/// Windowed examples of one epoch, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDataset {
    pub mode: ModeKind,
    pub window: usize,
    pub n_features: usize,
    pub master_seed: u64,
    pub epoch_index: u64,
    pub power_feature: bool,
    pub power_norm: [f64; 2],
    /// SHA-256 of the generating configuration.
    pub config_hash: [u8; 32],
    pub scenarios: Vec<ScenarioRecord>,
    /// Index into `scenarios` for every example.
    pub scenario_index: Vec<u32>,
    /// Example-major `len × window × n_features`.
    pub features: Vec<f32>,
    /// Example-major `len × 2`.
    pub targets: Vec<f32>,
}

impl EpochDataset {
    pub fn len(&self) -> usize {
        self.scenario_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenario_index.is_empty()
    }

    pub fn example_stride(&self) -> usize {
        self.window * self.n_features
    }

    pub fn features_of(&self, i: usize) -> &[f32] {
        let s = self.example_stride();
        &self.features[i * s..(i + 1) * s]
    }

    pub fn target_of(&self, i: usize) -> [f32; 2] {
        [self.targets[2 * i], self.targets[2 * i + 1]]
    }

    pub fn scenario_of(&self, i: usize) -> &Scenario {
        &self.scenarios[self.scenario_index[i] as usize].scenario
    }

    pub fn example(&self, i: usize) -> WindowedExample {
        WindowedExample {
            features: self.features_of(i).to_vec(),
            n_features: self.n_features,
            target: self.target_of(i),
        }
    }

    /// Mean squared error of predicting each target by the center row's X
    /// components. Zero for an ideal channel.
    pub fn copy_center_mse(&self) -> f64 {
        let c = self.window / 2;
        let nf = self.n_features;
        let mut acc = 0.0;
        for i in 0..self.len() {
            let row = &self.features_of(i)[c * nf..c * nf + 2];
            let t = self.target_of(i);
            acc += (row[0] as f64 - t[0] as f64).powi(2) + (row[1] as f64 - t[1] as f64).powi(2);
        }
        acc / (2 * self.len()).max(1) as f64
    }
}

/// Digest binding a dataset to the configuration that produced it.
pub fn config_hash(mode: &SamplerMode, cfg: &EpochConfig, sim: &SimConfig) -> [u8; 32] {
    #[derive(Serialize)]
    struct Canon<'a> {
        sampler: &'a SamplerMode,
        epoch: &'a EpochConfig,
        sim: &'a SimConfig,
    }
    let text = toml::to_string(&Canon { sampler: mode, epoch: cfg, sim }).expect("plain data serializes");
    Sha256::digest(text.as_bytes()).into()
}

fn epoch_seed(master_seed: u64, epoch_index: u64) -> u64 {
    rng::derive(master_seed, stream::EPOCH, epoch_index)
}

/// Fresh scenarios and examples for one epoch. Sub-frames are simulated in
/// parallel; the final order comes from a seeded shuffle, so the result
/// does not depend on the number of worker threads.
pub fn generate_epoch(
    mode: &SamplerMode,
    cfg: &EpochConfig,
    sim: &SimConfig,
    epoch_index: u64,
    master_seed: u64,
) -> Result<EpochDataset> {
    cfg.validate()?;
    sim.validate()?;
    let seed = epoch_seed(master_seed, epoch_index);
    let mut scen_rng = rng::rng(rng::derive(seed, stream::SCENARIO, 0));
    let n_sub = cfg.epoch_size.div_ceil(cfg.subframe_examples);
    let jobs: Vec<(Scenario, usize)> = (0..n_sub)
        .map(|i| {
            let n = cfg.subframe_examples.min(cfg.epoch_size - i * cfg.subframe_examples);
            (sample_scenario(mode, &mut scen_rng), n)
        })
        .collect();

    let parts: Vec<Result<(ScenarioRecord, Vec<f32>, Vec<f32>)>> = jobs
        .par_iter()
        .map(|&(s, n)| {
            let d = generate_scenario_data(&s, n + cfg.window - 1, sim)?;
            let power = cfg.power_feature.then(|| power_feature(s.p_dbm) as f32);
            let mut f = Vec::new();
            let mut t = Vec::new();
            windows::append_windows(&d.rx_x, &d.rx_y, &d.tx_x, cfg.window, power, &mut f, &mut t)?;
            log::debug!("sub-frame {:?}: {} examples", s, n);
            Ok((ScenarioRecord { scenario: s, norm: d.norm }, f, t))
        })
        .collect();

    let stride = cfg.window * cfg.n_features();
    let mut scenarios = Vec::with_capacity(n_sub);
    let mut order: Vec<(u32, usize)> = Vec::with_capacity(cfg.epoch_size);
    let mut chunks = Vec::with_capacity(n_sub);
    for (k, part) in parts.into_iter().enumerate() {
        let (rec, f, t) = part?;
        scenarios.push(rec);
        order.extend((0..t.len() / 2).map(|j| (k as u32, j)));
        chunks.push((f, t));
    }
    order.shuffle(&mut rng::rng(rng::derive(seed, stream::SHUFFLE, 0)));

    let mut features = Vec::with_capacity(cfg.epoch_size * stride);
    let mut targets = Vec::with_capacity(cfg.epoch_size * 2);
    let mut scenario_index = Vec::with_capacity(cfg.epoch_size);
    for &(k, j) in &order {
        let (f, t) = &chunks[k as usize];
        features.extend_from_slice(&f[j * stride..(j + 1) * stride]);
        targets.extend_from_slice(&t[2 * j..2 * j + 2]);
        scenario_index.push(k);
    }
    Ok(EpochDataset {
        mode: mode.kind,
        window: cfg.window,
        n_features: cfg.n_features(),
        master_seed,
        epoch_index,
        power_feature: cfg.power_feature,
        power_norm: POWER_NORM,
        config_hash: config_hash(mode, cfg, sim),
        scenarios,
        scenario_index,
        features,
        targets,
    })
}
