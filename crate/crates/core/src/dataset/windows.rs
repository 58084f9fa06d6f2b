use num_complex::Complex64;

use crate::error::{Error, Result};

/// Affine map of launch power onto the fifth input feature: [-1, 5] dBm
/// goes to [-1, 1].
pub fn power_feature(p_dbm: f64) -> f64 {
    (p_dbm - 2.0) / 3.0
}

/// One input window and the X-polarization symbol at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedExample {
    /// Row-major `window × n_features`: X_I, X_Q, Y_I, Y_Q and optionally the
    /// normalized launch power.
    pub features: Vec<f32>,
    pub n_features: usize,
    /// Real and imaginary part of the transmitted center symbol.
    pub target: [f32; 2],
}

impl WindowedExample {
    pub fn window(&self) -> usize {
        self.features.len() / self.n_features
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.features[t * self.n_features..(t + 1) * self.n_features]
    }
}

pub(crate) fn check_window_input(
    rx_x: &[Complex64],
    rx_y: &[Complex64],
    tx_x: &[Complex64],
    window: usize,
) -> Result<usize> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::config("model.window", "must be odd and positive"));
    }
    if rx_x.len() != rx_y.len() || rx_x.len() != tx_x.len() {
        return Err(Error::InvalidLength(format!(
            "rx X/Y and tx lengths differ: {}, {}, {}",
            rx_x.len(),
            rx_y.len(),
            tx_x.len()
        )));
    }
    if rx_x.len() < window {
        return Err(Error::InvalidLength(format!(
            "{} symbols cannot fill a window of {window}",
            rx_x.len()
        )));
    }
    Ok(rx_x.len() - window + 1)
}

/// Append all stride-1 windows to flat feature/target buffers. Returns the
/// number of examples written.
pub(crate) fn append_windows(
    rx_x: &[Complex64],
    rx_y: &[Complex64],
    tx_x: &[Complex64],
    window: usize,
    power: Option<f32>,
    features: &mut Vec<f32>,
    targets: &mut Vec<f32>,
) -> Result<usize> {
    let n = check_window_input(rx_x, rx_y, tx_x, window)?;
    let nf = 4 + power.is_some() as usize;
    let rows: Vec<[f32; 5]> = rx_x
        .iter()
        .zip(rx_y)
        .map(|(x, y)| [x.re as f32, x.im as f32, y.re as f32, y.im as f32, power.unwrap_or(0.0)])
        .collect();
    features.reserve(n * window * nf);
    targets.reserve(2 * n);
    let center = window / 2;
    for start in 0..n {
        for r in &rows[start..start + window] {
            features.extend_from_slice(&r[..nf]);
        }
        let t = tx_x[start + center];
        targets.extend_from_slice(&[t.re as f32, t.im as f32]);
    }
    Ok(n)
}

/// Stride-1 sliding windows over aligned received symbols, each labelled
/// with the transmitted X symbol at the window center. `power` is the
/// already normalized power feature, repeated on every row when present.
pub fn build_windows(
    rx_x: &[Complex64],
    rx_y: &[Complex64],
    tx_x: &[Complex64],
    window: usize,
    power: Option<f32>,
) -> Result<Vec<WindowedExample>> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let n = append_windows(rx_x, rx_y, tx_x, window, power, &mut features, &mut targets)?;
    let nf = 4 + power.is_some() as usize;
    let stride = window * nf;
    Ok((0..n)
        .map(|i| WindowedExample {
            features: features[i * stride..(i + 1) * stride].to_vec(),
            n_features: nf,
            target: [targets[2 * i], targets[2 * i + 1]],
        })
        .collect())
}
