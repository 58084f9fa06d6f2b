//! Experiment configuration: one TOML tree, layered over a preset.
//!
//! A config file only needs the keys it changes. Keys are merged into the
//! full preset, or the desk preset when `--desk-scale` is given, and the
//! result is validated as a whole. Errors name the offending field.

use std::path::{Path, PathBuf};

use mtleq::channel::{AmplifierParams, FiberParams, LinkConfig, SsfmConfig};
use mtleq::dataset::{EpochConfig, FixedAxes, ModeKind, SamplerMode, ScenarioBounds, ScenarioGrid, SimConfig};
use mtleq::eval::EvalOptions;
use mtleq::nn::{ModelConfig, Precision, TrainConfig, DEFAULT_CHUNK};
use mtleq::rng::Namespace;
use mtleq::signal::PulseShapeConfig;
use mtleq::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierSection {
    pub noise_figure_db: f64,
    pub ase: bool,
}

/// Grid values for the axes the mode varies; axes it holds fixed must be
/// left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_spans: Vec<u32>,
    pub p_dbm: Vec<f64>,
    pub rs_gbd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub mode: ModeKind,
    pub fixed: FixedAxes,
    pub grid: GridSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub hidden: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// 0 selects the mode's full budget (1000, or 1200 for Universal).
    pub epochs: usize,
    pub epoch_size: usize,
    pub subframe_examples: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub precision: Precision,
    pub chunk_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_symbols: usize,
    pub min_symbols: usize,
    pub precision: Precision,
}

/// Grids and held-fixed values of the three sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_spans: Vec<u32>,
    pub p_dbm: Vec<f64>,
    pub rs_gbd: Vec<f64>,
    pub fixed: FixedAxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    /// Stamped with the evaluation namespace before use.
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub seeds: Seeds,
    pub fiber: FiberParams,
    pub amplifier: AmplifierSection,
    pub ssfm: SsfmConfig,
    pub pulse: PulseShapeConfig,
    pub sampler: SamplerSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn grid_for(mode: ModeKind, full: &ScenarioGrid) -> GridSection {
    GridSection {
        n_spans: if mode.varies_spans() { full.n_spans.clone() } else { vec![] },
        p_dbm: if mode.varies_power() { full.p_dbm.clone() } else { vec![] },
        rs_gbd: if mode.varies_rate() { full.rs_gbd.clone() } else { vec![] },
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full(ModeKind::StlFixed)
    }
}

impl ExperimentConfig {
    /// The full recipe: 4 x 100 biLSTM over 141 symbols, 2^18 examples per
    /// epoch, batch 2000, lr 1e-3.
    pub fn full(mode: ModeKind) -> Self {
        let g = ScenarioGrid::full();
        ExperimentConfig {
            scale: Scale::Full,
            seeds: Seeds { master: 1, eval: 1 },
            fiber: FiberParams::default(),
            amplifier: AmplifierSection {
                noise_figure_db: 4.5,
                ase: true,
            },
            ssfm: SsfmConfig::default(),
            pulse: PulseShapeConfig::default(),
            sampler: SamplerSection {
                mode,
                fixed: FixedAxes::default(),
                grid: grid_for(mode, &g),
            },
            model: ModelSection {
                n_layers: 4,
                hidden: 100,
                window: 141,
            },
            training: TrainingSection {
                epochs: 0,
                epoch_size: 1 << 18,
                subframe_examples: 1 << 14,
                batch_size: 2000,
                lr: 1e-3,
                precision: Precision::F32,
                chunk_size: DEFAULT_CHUNK,
            },
            eval: EvalSection {
                n_symbols: 100_000,
                min_symbols: 10_000,
                precision: Precision::F32,
            },
            sweep: SweepSection {
                n_spans: g.n_spans,
                p_dbm: g.p_dbm,
                rs_gbd: g.rs_gbd,
                fixed: FixedAxes::default(),
            },
            output: OutputSection { dir: PathBuf::from("out") },
        }
    }

    /// Laptop-sized preset: window 41, 2 x 16 biLSTM, 2^13 examples per
    /// epoch, 30 epochs, links of 2 to 10 spans. Batches of 128 give 64
    /// updates per epoch.
    pub fn desk(mode: ModeKind) -> Self {
        let g = ScenarioGrid::desk();
        let fixed = FixedAxes {
            n_spans: 10,
            ..FixedAxes::default()
        };
        let mut c = Self::full(mode);
        c.scale = Scale::Desk;
        c.sampler.fixed = fixed;
        c.sampler.grid = grid_for(mode, &g);
        c.model = ModelSection {
            n_layers: 2,
            hidden: 16,
            window: 41,
        };
        c.training.epochs = 30;
        c.training.epoch_size = 1 << 13;
        c.training.subframe_examples = 1 << 11;
        c.training.batch_size = 128;
        c.eval.n_symbols = 20_000;
        c.sweep = SweepSection {
            n_spans: g.n_spans,
            p_dbm: g.p_dbm,
            rs_gbd: g.rs_gbd,
            fixed,
        };
        c
    }

    pub fn preset(scale: Scale, mode: ModeKind) -> Self {
        match scale {
            Scale::Full => Self::full(mode),
            Scale::Desk => Self::desk(mode),
        }
    }

    /// Merge a TOML document into this configuration. Tables merge key by
    /// key; any other value replaces the old one. A changed `sampler.mode`
    /// without an explicit grid picks up the preset grid of the new mode.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let overlay: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config { field: "config".into(), message: e.to_string() })?;
        let mode_only = overlay
            .get("sampler")
            .and_then(|s| s.as_table())
            .is_some_and(|s| s.contains_key("mode") && !s.contains_key("grid"));
        let mut base = toml::Table::try_from(self).expect("config serializes");
        merge(&mut base, overlay);
        let mut out: ExperimentConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config { field: "config".into(), message: e.to_string() })?;
        if mode_only {
            let preset = Self::preset(out.scale, out.sampler.mode);
            out.sampler.grid = preset.sampler.grid;
        }
        Ok(out)
    }

    pub fn from_file(base: &Self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        base.merge_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn bounds(&self) -> ScenarioBounds {
        match self.scale {
            Scale::Full => ScenarioBounds::FULL,
            Scale::Desk => ScenarioBounds::DESK,
        }
    }

    pub fn mode(&self) -> ModeKind {
        self.sampler.mode
    }

    pub fn sampler_mode(&self) -> SamplerMode {
        let g = &self.sampler.grid;
        SamplerMode {
            kind: self.sampler.mode,
            fixed: self.sampler.fixed,
            grid: ScenarioGrid {
                n_spans: g.n_spans.clone(),
                p_dbm: g.p_dbm.clone(),
                rs_gbd: g.rs_gbd.clone(),
            },
        }
    }

    pub fn power_feature(&self) -> bool {
        self.sampler.mode.default_power_feature()
    }

    pub fn link(&self) -> LinkConfig {
        LinkConfig {
            fiber: self.fiber,
            amplifier: AmplifierParams {
                ase: self.amplifier.ase,
                ..AmplifierParams::for_span(&self.fiber, self.amplifier.noise_figure_db)
            },
            ssfm: self.ssfm,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            link: self.link(),
            pulse: self.pulse,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_layers: self.model.n_layers,
            hidden: self.model.hidden,
            input_features: 4 + self.power_feature() as usize,
            window: self.model.window,
            output_dim: 2,
        }
    }

    pub fn epoch_config(&self) -> EpochConfig {
        EpochConfig {
            window: self.model.window,
            epoch_size: self.training.epoch_size,
            subframe_examples: self.training.subframe_examples,
            power_feature: self.power_feature(),
        }
    }

    pub fn epochs(&self) -> usize {
        match self.training.epochs {
            0 => self.sampler.mode.full_epochs(),
            n => n,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs(),
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            precision: self.training.precision,
            chunk_size: self.training.chunk_size,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            sim: self.sim(),
            precision: self.eval.precision,
            min_symbols: self.eval.min_symbols,
            ..EvalOptions::default()
        }
    }

    pub fn eval_seed(&self) -> u64 {
        Namespace::Eval.tag_seed(self.seeds.eval)
    }

    /// [`validate`](Self::validate) plus the checks that only matter when
    /// training.
    pub fn validate_for_training(&self) -> Result<()> {
        self.validate()?;
        if self.training.batch_size > self.training.epoch_size {
            return Err(Error::Config {
                field: "training.batch_size".into(),
                message: format!(
                    "{} exceeds the epoch size {}",
                    self.training.batch_size, self.training.epoch_size
                ),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.link().validate()?;
        self.pulse.validate()?;
        let mode = self.sampler.mode;
        let g = &self.sampler.grid;
        for (varies, given, axis) in [
            (mode.varies_spans(), !g.n_spans.is_empty(), "n_spans"),
            (mode.varies_power(), !g.p_dbm.is_empty(), "p_dbm"),
            (mode.varies_rate(), !g.rs_gbd.is_empty(), "rs_gbd"),
        ] {
            if given && !varies {
                return Err(Error::Config {
                    field: format!("sampler.grid.{axis}"),
                    message: format!("mode {mode:?} holds {axis} fixed; leave this grid empty"),
                });
            }
        }
        let bounds = self.bounds();
        self.sampler_mode().validate(&bounds)?;
        self.model_config().validate()?;
        let e = self.epoch_config();
        e.validate()?;
        self.train_config().validate()?;
        if self.eval.n_symbols < self.eval.min_symbols {
            return Err(Error::Config {
                field: "eval.n_symbols".into(),
                message: format!("{} is below the floor {}", self.eval.n_symbols, self.eval.min_symbols),
            });
        }
        let s = &self.sweep;
        let f = s.fixed;
        bounds.check(f.p_dbm, f.rs_gbd, f.n_spans, "sweep.fixed")?;
        for &n in &s.n_spans {
            bounds.check(f.p_dbm, f.rs_gbd, n, "sweep")?;
        }
        for &p in &s.p_dbm {
            bounds.check(p, f.rs_gbd, f.n_spans, "sweep")?;
        }
        for &r in &s.rs_gbd {
            bounds.check(f.p_dbm, r, f.n_spans, "sweep")?;
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::Config {
                field: "output.dir".into(),
                message: "must not be empty".into(),
            });
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
