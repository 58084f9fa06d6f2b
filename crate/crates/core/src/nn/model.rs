use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use crate::dataset::ModeKind;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Gate blocks inside every `4H` parameter dimension, in this order.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub input_features: usize,
    pub window: usize,
    pub output_dim: usize,
}

impl Default for ModelConfig {
    /// Four biLSTM layers of 100 units over 141-symbol windows.
    fn default() -> Self {
        ModelConfig {
            n_layers: 4,
            hidden: 100,
            input_features: 4,
            window: 141,
            output_dim: 2,
        }
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            n_layers: 2,
            hidden: 16,
            window: 41,
            ..Default::default()
        }
    }

    pub fn center(&self) -> usize {
        self.window / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::config("model.n_layers", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("model.hidden", "must be at least 1"));
        }
        if !(self.input_features == 4 || self.input_features == 5) {
            return Err(Error::config("model.input_features", "must be 4 or 5"));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::config("model.window", "must be odd and positive"));
        }
        if self.output_dim != 2 {
            return Err(Error::config("model.output_dim", "must be 2 (real and imaginary part)"));
        }
        Ok(())
    }
}

/// Offsets of one direction's tensors in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirOffsets {
    /// `4H × d_in`, row-major.
    pub w: usize,
    /// `4H × H`, row-major.
    pub u: usize,
    /// `4H`.
    pub b: usize,
    pub d_in: usize,
}

/// Where every tensor lives in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub hidden: usize,
    pub layers: Vec<[DirOffsets; 2]>,
    /// `output_dim × 2H`, row-major.
    pub dense_w: usize,
    pub dense_b: usize,
    pub output_dim: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        let mut at = 0;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let d_in = if l == 0 { cfg.input_features } else { 2 * h };
            let dir = |at: &mut usize| {
                let o = DirOffsets {
                    w: *at,
                    u: *at + 4 * h * d_in,
                    b: *at + 4 * h * d_in + 4 * h * h,
                    d_in,
                };
                *at = o.b + 4 * h;
                o
            };
            let f = dir(&mut at);
            let b = dir(&mut at);
            layers.push([f, b]);
        }
        let dense_w = at;
        let dense_b = dense_w + cfg.output_dim * 2 * h;
        Layout {
            hidden: h,
            layers,
            dense_w,
            dense_b,
            output_dim: cfg.output_dim,
            total: dense_b + cfg.output_dim,
        }
    }
}

/// Borrowed tensors of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirParams<'a, T> {
    pub w: &'a [T],
    pub u: &'a [T],
    pub b: &'a [T],
    pub hidden: usize,
    pub d_in: usize,
}

impl<'a, T> LstmDirParams<'a, T> {
    pub fn from_flat(p: &'a [T], o: &DirOffsets, hidden: usize) -> Self {
        LstmDirParams {
            w: &p[o.w..o.u],
            u: &p[o.u..o.b],
            b: &p[o.b..o.b + 4 * hidden],
            hidden,
            d_in: o.d_in,
        }
    }
}

/// Borrowed dense readout.
#[derive(Debug, Clone, Copy)]
pub struct DenseParams<'a, T> {
    /// `output_dim × 2H`, row-major.
    pub weight: &'a [T],
    pub bias: &'a [T],
}

/// Where a model came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub mode: ModeKind,
    pub master_seed: u64,
    pub epochs_completed: u64,
    /// SHA-256 of the training configuration.
    pub config_hash: [u8; 32],
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            mode: ModeKind::StlFixed,
            master_seed: 0,
            epochs_completed: 0,
            config_hash: [0; 32],
        }
    }
}

/// Stacked biLSTM with a dense readout at the window center, plus its
/// optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerModel {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
    pub adam: AdamState,
    pub provenance: Provenance,
}

impl EqualizerModel {
    /// Kernels uniform in `±1/sqrt(H)`, biases zero except the forget gate
    /// bias of 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let h = config.hidden;
        let a = 1.0 / (h as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
        let mut r = rng::rng(rng::derive(seed, stream::INIT, 0));
        let layout = m.layout.clone();
        for dirs in &layout.layers {
            for o in dirs {
                for v in &mut m.params[o.w..o.b] {
                    *v = dist.sample(&mut r);
                }
                for v in &mut m.params[o.b + h..o.b + 2 * h] {
                    *v = 1.0;
                }
            }
        }
        for v in &mut m.params[layout.dense_w..layout.dense_b] {
            *v = dist.sample(&mut r);
        }
        Ok(m)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(EqualizerModel {
            config,
            params: vec![0.0; layout.total],
            adam: AdamState::new(layout.total),
            layout,
            provenance: Provenance::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn lstm(&self, layer: usize, dir: usize) -> LstmDirParams<'_, f64> {
        LstmDirParams::from_flat(&self.params, &self.layout.layers[layer][dir], self.config.hidden)
    }

    pub fn dense(&self) -> DenseParams<'_, f64> {
        DenseParams {
            weight: &self.params[self.layout.dense_w..self.layout.dense_b],
            bias: &self.params[self.layout.dense_b..self.layout.total],
        }
    }

    /// Mirror the network in time: exchange the forward and backward
    /// tensors of every layer, and in layers fed by a previous biLSTM also
    /// exchange the two halves of the input columns.
    pub fn swap_directions(&mut self) {
        let h = self.config.hidden;
        for (l, dirs) in self.layout.layers.clone().into_iter().enumerate() {
            let (f, b) = (dirs[0], dirs[1]);
            let len = b.w - f.w;
            let (lo, hi) = self.params.split_at_mut(b.w);
            lo[f.w..f.w + len].swap_with_slice(&mut hi[..len]);
            if l > 0 {
                for o in dirs {
                    for row in self.params[o.w..o.u].chunks_exact_mut(2 * h) {
                        let (x, y) = row.split_at_mut(h);
                        x.swap_with_slice(y);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_sized_layout() {
        let cfg = ModelConfig::default();
        let l = Layout::new(&cfg);
        // first layer: 2 x (400*4 + 400*100 + 400); three more with d_in 200
        let first = 2 * (1600 + 40_000 + 400);
        let later = 2 * (80_000 + 40_000 + 400);
        assert_eq!(l.total, first + 3 * later + 2 * 200 + 2);
        assert_eq!(l.layers[1][0].d_in, 200);
    }

    #[test]
    fn init_ranges_and_forget_bias() {
        let cfg = ModelConfig { n_layers: 2, hidden: 4, input_features: 5, window: 9, output_dim: 2 };
        let m = EqualizerModel::new(cfg, 1).unwrap();
        let p = m.lstm(1, 1);
        assert!(p.w.iter().chain(p.u).all(|v| v.abs() <= 0.5));
        assert_eq!(p.b, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(m.dense().bias.iter().all(|&v| v == 0.0));
        assert_eq!(m, EqualizerModel::new(cfg, 1).unwrap());
        assert_ne!(m.params, EqualizerModel::new(cfg, 2).unwrap().params);
    }

    #[test]
    fn config_checks() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::desk().validate().is_ok());
        let bad = ModelConfig { input_features: 3, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "model.input_features"));
        assert!(ModelConfig { window: 140, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn direction_swap_is_an_involution() {
        let cfg = ModelConfig { n_layers: 2, hidden: 3, input_features: 4, window: 5, output_dim: 2 };
        let m = EqualizerModel::new(cfg, 3).unwrap();
        let mut s = m.clone();
        s.swap_directions();
        assert_eq!(s.lstm(1, 0).u, m.lstm(1, 1).u);
        s.swap_directions();
        assert_eq!(s, m);
    }
}
