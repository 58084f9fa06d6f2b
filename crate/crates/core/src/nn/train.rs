use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::adam_step;
use super::{EqualizerModel, Precision, DEFAULT_CHUNK};
use crate::dataset::{generate_epoch, EpochConfig, EpochDataset, SamplerMode, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub precision: Precision,
    /// Examples per forward/backward work unit inside a batch.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 2000,
            lr: 1e-3,
            precision: Precision::F32,
            chunk_size: DEFAULT_CHUNK,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("training.lr", "must be positive"));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("training.chunk_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Full batches per epoch; the remainder is dropped.
    pub fn batches_per_epoch(&self, epoch_size: usize) -> usize {
        epoch_size / self.batch_size
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: u64,
    /// Mean of the batch losses.
    pub loss: f64,
    pub wall_time_s: f64,
    pub n_batches: usize,
    /// Short digest of the epoch's scenario table.
    pub scenario_digest: String,
}

fn scenario_digest(ds: &EpochDataset) -> String {
    let mut h = Sha256::new();
    for r in &ds.scenarios {
        let s = r.scenario;
        h.update(s.p_dbm.to_le_bytes());
        h.update(s.rs_gbd.to_le_bytes());
        h.update(s.n_spans.to_le_bytes());
        h.update(s.seed.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One pass of minibatch Adam over `ds` in stored order. Returns the mean
/// batch loss and the number of batches.
pub fn train_epoch(model: &mut EqualizerModel, ds: &EpochDataset, cfg: &TrainConfig) -> Result<(f64, usize)> {
    cfg.validate()?;
    let mc = model.config;
    if ds.window != mc.window || ds.n_features != mc.input_features {
        return Err(Error::config(
            "model",
            format!(
                "dataset has window {} with {} features, model expects {} with {}",
                ds.window, ds.n_features, mc.window, mc.input_features
            ),
        ));
    }
    let n_batches = cfg.batches_per_epoch(ds.len());
    if n_batches == 0 {
        return Err(Error::config(
            "training.batch_size",
            format!("{} exceeds the epoch size {}", cfg.batch_size, ds.len()),
        ));
    }
    model.adam.hyper.lr = cfg.lr;
    let stride = ds.example_stride();
    let mut total = 0.0;
    for k in 0..n_batches {
        let (a, b) = (k * cfg.batch_size, (k + 1) * cfg.batch_size);
        let (loss, grad) = model.loss_and_gradient(
            &ds.features[a * stride..b * stride],
            &ds.targets[2 * a..2 * b],
            cfg.precision,
            cfg.chunk_size,
        )?;
        if !loss.is_finite() {
            return Err(Error::Numerics(format!("batch {k} loss is {loss}")));
        }
        adam_step(&mut model.params, &grad, &mut model.adam)?;
        total += loss;
        log::trace!("batch {}/{}: loss {:.6e}", k + 1, n_batches, loss);
    }
    Ok((total / n_batches as f64, n_batches))
}

/// Train from the model's recorded epoch count up to `cfg.epochs`, drawing
/// a fresh dataset for every epoch. `on_epoch` runs after each epoch with
/// the updated model (checkpointing, logging).
pub fn train(
    model: &mut EqualizerModel,
    mode: &SamplerMode,
    epoch_cfg: &EpochConfig,
    sim: &SimConfig,
    cfg: &TrainConfig,
    master_seed: u64,
    on_epoch: &mut dyn FnMut(&EqualizerModel, &EpochLog) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    epoch_cfg.validate()?;
    if epoch_cfg.window != model.config.window || epoch_cfg.n_features() != model.config.input_features {
        return Err(Error::config(
            "model.input_features",
            format!(
                "data provides window {} with {} features, model expects {} with {}",
                epoch_cfg.window,
                epoch_cfg.n_features(),
                model.config.window,
                model.config.input_features
            ),
        ));
    }
    let start = model.provenance.epochs_completed;
    if start > 0 && (model.provenance.master_seed != master_seed || model.provenance.mode != mode.kind) {
        return Err(Error::config(
            "seeds.master",
            "checkpoint was trained with a different seed or mode",
        ));
    }
    model.provenance.master_seed = master_seed;
    model.provenance.mode = mode.kind;
    let mut logs = Vec::new();
    for e in start..cfg.epochs as u64 {
        let t0 = Instant::now();
        let ds = generate_epoch(mode, epoch_cfg, sim, e, master_seed)?;
        let (loss, n_batches) = train_epoch(model, &ds, cfg)?;
        model.provenance.epochs_completed = e + 1;
        let entry = EpochLog {
            epoch: e + 1,
            loss,
            wall_time_s: t0.elapsed().as_secs_f64(),
            n_batches,
            scenario_digest: scenario_digest(&ds),
        };
        log::info!(
            "epoch {}/{}: loss {:.6e} ({} batches, {:.1} s)",
            entry.epoch,
            cfg.epochs,
            loss,
            n_batches,
            entry.wall_time_s
        );
        on_epoch(model, &entry)?;
        logs.push(entry);
    }
    Ok(logs)
}
