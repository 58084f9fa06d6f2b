//! Stacked bidirectional LSTM equalizer: forward pass, exact
//! backpropagation through time, MSE loss, Adam, training and persistence.

mod adam;
mod bilstm;
mod io;
mod model;
mod real;
mod train;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use bilstm::{lstm_cell_forward, CellCache, Tape};
pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    DenseParams, DirOffsets, EqualizerModel, Layout, LstmDirParams, ModelConfig, Provenance, GATE_ORDER,
};
pub use real::Real;
pub use train::{train, train_epoch, EpochLog, TrainConfig};

/// Arithmetic used for the network kernels. Parameters and optimizer
/// state are always kept in 64-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Mean over batch and components of the squared error.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() || pred.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "loss needs equal nonempty batch x 2 arrays, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Affine, linear-activation readout of one `2H` vector.
pub fn dense_readout(h: &[f64], d: &DenseParams<'_, f64>) -> Result<Vec<f64>> {
    let od = d.bias.len();
    if od == 0 || d.weight.len() != od * h.len() {
        return Err(Error::Shape(format!(
            "readout of {} inputs with a {} x {} weight",
            h.len(),
            od,
            d.weight.len() / od.max(1)
        )));
    }
    Ok((0..od)
        .map(|k| d.bias[k] + d.weight[k * h.len()..(k + 1) * h.len()].iter().zip(h).map(|(w, x)| w * x).sum::<f64>())
        .collect())
}

/// Gather examples `start..start + count` of an example-major array into a
/// time-major batch.
fn time_major<T: Real, S: Copy + Into<f64>>(
    features: &[S],
    start: usize,
    count: usize,
    window: usize,
    nf: usize,
) -> Vec<T> {
    let mut out = vec![T::ZERO; window * count * nf];
    for b in 0..count {
        let ex = &features[(start + b) * window * nf..(start + b + 1) * window * nf];
        for t in 0..window {
            let dst = &mut out[(t * count + b) * nf..(t * count + b + 1) * nf];
            for (d, &s) in dst.iter_mut().zip(&ex[t * nf..(t + 1) * nf]) {
                *d = T::from_f64(s.into());
            }
        }
    }
    out
}

/// Examples per forward/backward chunk when none is configured.
pub const DEFAULT_CHUNK: usize = 250;

impl EqualizerModel {
    fn check_batch(&self, features_len: usize) -> Result<usize> {
        let stride = self.config.window * self.config.input_features;
        if features_len == 0 || features_len % stride != 0 {
            return Err(Error::Shape(format!(
                "{features_len} feature values are not a whole number of {} x {} windows",
                self.config.window, self.config.input_features
            )));
        }
        Ok(features_len / stride)
    }

    /// Output sequence of every layer for one window given row-major as
    /// `window × input_features`. Each entry is row-major `window × 2H`.
    pub fn bilstm_stack_forward(&self, window: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.check_batch(window.len())?;
        if n != 1 {
            return Err(Error::Shape(format!("expected one window, got {n}")));
        }
        let tape = bilstm::forward(&self.config, &self.layout, &self.params, window.to_vec(), 1, true, true);
        Ok(tape.outputs)
    }

    /// Forward pass over example-major windows in 64-bit. With `cache` the
    /// tape can be passed to [`EqualizerModel::backward`].
    pub fn forward_batch(&self, features: &[f64], cache: bool) -> Result<Tape<f64>> {
        let n = self.check_batch(features.len())?;
        let c = &self.config;
        let x = time_major(features, 0, n, c.window, c.input_features);
        Ok(bilstm::forward(c, &self.layout, &self.params, x, n, false, cache))
    }

    /// Gradient of the MSE between the tape's predictions and `targets`.
    pub fn backward(&self, tape: &Tape<f64>, targets: &[f64]) -> Result<Vec<f64>> {
        if targets.len() != tape.pred.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} outputs",
                targets.len(),
                tape.pred.len()
            )));
        }
        let n = tape.batch as f64;
        let dpred: Vec<f64> = tape.pred.iter().zip(targets).map(|(p, t)| (p - t) / n).collect();
        bilstm::backward(&self.config, &self.layout, &self.params, tape, &dpred)
    }

    /// Batch MSE and its gradient, evaluated in chunks of `chunk` examples
    /// (in parallel when a thread pool is available) and reduced in a fixed
    /// order.
    pub fn loss_and_gradient<S>(
        &self,
        features: &[S],
        targets: &[S],
        precision: Precision,
        chunk: usize,
    ) -> Result<(f64, Vec<f64>)>
    where
        S: Copy + Into<f64> + Sync,
    {
        match precision {
            Precision::F32 => self.loss_grad_typed::<f32, S>(features, targets, chunk),
            Precision::F64 => self.loss_grad_typed::<f64, S>(features, targets, chunk),
        }
    }

    fn loss_grad_typed<T: Real, S>(&self, features: &[S], targets: &[S], chunk: usize) -> Result<(f64, Vec<f64>)>
    where
        S: Copy + Into<f64> + Sync,
    {
        let n = self.check_batch(features.len())?;
        if targets.len() != 2 * n {
            return Err(Error::Shape(format!("{} targets for {n} examples", targets.len())));
        }
        let c = &self.config;
        let chunk = chunk.max(1);
        let p: Vec<T> = self.params.iter().map(|&v| T::from_f64(v)).collect();
        let inv_n = 1.0 / n as f64;
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let parts: Vec<Result<(f64, Vec<T>)>> = starts
            .par_iter()
            .map(|&s| {
                let b = chunk.min(n - s);
                let x = time_major::<T, S>(features, s, b, c.window, c.input_features);
                let tape = bilstm::forward(c, &self.layout, &p, x, b, false, true);
                let mut sse = 0.0;
                let dpred: Vec<T> = tape
                    .pred
                    .iter()
                    .zip(&targets[2 * s..2 * (s + b)])
                    .map(|(&y, &t)| {
                        let d = y.to_f64() - t.into();
                        sse += d * d;
                        T::from_f64(d * inv_n)
                    })
                    .collect();
                let g = bilstm::backward(c, &self.layout, &p, &tape, &dpred)?;
                Ok((sse, g))
            })
            .collect();
        let mut grad = vec![0.0; self.layout.total];
        let mut sse = 0.0;
        for part in parts {
            let (s, g) = part?;
            sse += s;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b.to_f64();
            }
        }
        Ok((sse / (2 * n) as f64, grad))
    }

    /// Worst relative disagreement between the 64-bit analytic gradient and
    /// central differences of step `delta`, over every parameter.
    pub fn gradient_check(&self, features: &[f64], targets: &[f64], delta: f64) -> Result<f64> {
        let (_, g) = self.loss_and_gradient(features, targets, Precision::F64, DEFAULT_CHUNK)?;
        let loss = |m: &EqualizerModel| -> Result<f64> {
            let tape = m.forward_batch(features, false)?;
            mse_loss(tape.predictions(), targets)
        };
        let mut probe = self.clone();
        let mut worst: f64 = 0.0;
        for k in 0..self.n_params() {
            let v = self.params[k];
            probe.params[k] = v + delta;
            let up = loss(&probe)?;
            probe.params[k] = v - delta;
            let down = loss(&probe)?;
            probe.params[k] = v;
            let fd = (up - down) / (2.0 * delta);
            worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6));
        }
        Ok(worst)
    }

    /// Equalized X-polarization symbols for example-major windows.
    pub fn predict(&self, features: &[f32], precision: Precision) -> Result<Vec<Complex64>> {
        match precision {
            Precision::F32 => self.predict_typed::<f32>(features),
            Precision::F64 => self.predict_typed::<f64>(features),
        }
    }

    fn predict_typed<T: Real>(&self, features: &[f32]) -> Result<Vec<Complex64>> {
        let n = self.check_batch(features.len())?;
        let c = &self.config;
        let p: Vec<T> = self.params.iter().map(|&v| T::from_f64(v)).collect();
        let starts: Vec<usize> = (0..n).step_by(DEFAULT_CHUNK).collect();
        let parts: Vec<Vec<Complex64>> = starts
            .par_iter()
            .map(|&s| {
                let b = DEFAULT_CHUNK.min(n - s);
                let x = time_major::<T, f32>(features, s, b, c.window, c.input_features);
                let tape = bilstm::forward(c, &self.layout, &p, x, b, false, false);
                tape.pred
                    .chunks_exact(2)
                    .map(|v| Complex64::new(v[0].to_f64(), v[1].to_f64()))
                    .collect()
            })
            .collect();
        Ok(parts.concat())
    }
}
