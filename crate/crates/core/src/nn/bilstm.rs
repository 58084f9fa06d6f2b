//! Batched stacked-biLSTM forward pass and backpropagation through time.
//!
//! Activations are time-major: row `t * B + b` holds step `t` of example
//! `b`. Each layer's output has `2H` columns, forward direction first.

use super::model::{Layout, LstmDirParams, ModelConfig};
use super::real::{gemm, Real, View};
use crate::error::{Error, Result};

/// Pre-activation gate values and cell state kept for one step of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    /// Activated gates `i, f, g, o`, each of length `H`.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
}

/// One LSTM step for a single example:
/// `i, f, o = σ(.)`, `g = tanh(.)`, `c = f c_prev + i g`, `h = o tanh(c)`.
pub fn lstm_cell_forward(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmDirParams<'_, f64>,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let h = p.hidden;
    if x_t.len() != p.d_in || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "cell expects x {}, h {}, c {}; got {}, {}, {}",
            p.d_in,
            h,
            h,
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut a = p.b.to_vec();
    gemm(1, p.d_in, 4 * h, 1.0, View::rows(x_t, p.d_in), View::rows_t(p.w, p.d_in), 1.0, &mut a, 4 * h);
    gemm(1, h, 4 * h, 1.0, View::rows(h_prev, h), View::rows_t(p.u, h), 1.0, &mut a, 4 * h);
    let mut c = vec![0.0; h];
    let mut h_out = vec![0.0; h];
    for j in 0..h {
        let (hj, cj) = unit_forward(&mut a, h, j, c_prev[j]);
        h_out[j] = hj;
        c[j] = cj;
    }
    Ok((
        h_out,
        c.clone(),
        CellCache {
            gates: a,
            c_prev: c_prev.to_vec(),
            c,
        },
    ))
}

/// Activate the four gates of unit `j` in place and return `(h, c)`.
#[inline(always)]
fn unit_forward<T: Real>(g: &mut [T], h: usize, j: usize, c_prev: T) -> (T, T) {
    let i = g[j].sigmoid();
    let f = g[h + j].sigmoid();
    let gg = g[2 * h + j].tanh();
    let o = g[3 * h + j].sigmoid();
    g[j] = i;
    g[h + j] = f;
    g[2 * h + j] = gg;
    g[3 * h + j] = o;
    let c = f * c_prev + i * gg;
    (o * c.tanh(), c)
}

/// Steps a direction processes, inclusive, and the order it visits them.
#[derive(Debug, Clone, Copy)]
struct Span {
    lo: usize,
    hi: usize,
    reverse: bool,
}

impl Span {
    fn first(&self) -> usize {
        if self.reverse {
            self.hi
        } else {
            self.lo
        }
    }

    fn prev(&self, t: usize) -> usize {
        if self.reverse {
            t + 1
        } else {
            t - 1
        }
    }

    fn order(&self) -> Box<dyn Iterator<Item = usize>> {
        if self.reverse {
            Box::new((self.lo..=self.hi).rev())
        } else {
            Box::new(self.lo..=self.hi)
        }
    }

    fn rows(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub(crate) batch: usize,
    pub(crate) window: usize,
    /// Time-major input, `T × B × D`.
    pub(crate) input: Vec<T>,
    /// Per layer, `T × B × 2H`.
    pub(crate) outputs: Vec<Vec<T>>,
    /// Per layer and direction, activated gates `T × B × 4H`.
    pub(crate) gates: Vec<[Vec<T>; 2]>,
    /// Per layer and direction, cell states `T × B × H`.
    pub(crate) cells: Vec<[Vec<T>; 2]>,
    /// `B × output_dim`.
    pub(crate) pred: Vec<T>,
    full: bool,
    cached: bool,
}

impl<T> Tape<T> {
    pub fn predictions(&self) -> &[T] {
        &self.pred
    }

    /// Output sequence of `layer`, time-major `T × B × 2H`. Only layers that
    /// were kept are available.
    pub fn layer_output(&self, layer: usize) -> Option<&[T]> {
        self.outputs.get(layer).filter(|o| !o.is_empty()).map(|o| o.as_slice())
    }
}

fn spans(cfg: &ModelConfig, layer: usize, full: bool) -> [Span; 2] {
    let last = cfg.window - 1;
    if full || layer + 1 < cfg.n_layers {
        [
            Span { lo: 0, hi: last, reverse: false },
            Span { lo: 0, hi: last, reverse: true },
        ]
    } else {
        // the readout only sees the center step of the top layer
        let c = cfg.center();
        [
            Span { lo: 0, hi: c, reverse: false },
            Span { lo: c, hi: last, reverse: true },
        ]
    }
}

/// Forward pass over a time-major batch. `full` computes every step of the
/// top layer; otherwise only the steps feeding the center readout. With
/// `cache` off, intermediate activations are released as soon as possible
/// and the tape cannot be differentiated.
pub(crate) fn forward<T: Real>(
    cfg: &ModelConfig,
    layout: &Layout,
    p: &[T],
    input: Vec<T>,
    batch: usize,
    full: bool,
    cache: bool,
) -> Tape<T> {
    let (tn, b, h) = (cfg.window, batch, cfg.hidden);
    assert_eq!(input.len(), tn * b * cfg.input_features);
    let mut outputs: Vec<Vec<T>> = Vec::with_capacity(cfg.n_layers);
    let mut gates_all = Vec::with_capacity(cfg.n_layers);
    let mut cells_all = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let x: &[T] = if l == 0 { &input } else { &outputs[l - 1] };
        let mut out = vec![T::ZERO; tn * b * 2 * h];
        let mut gates_ld: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        let mut cells_ld: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        for (dir, span) in spans(cfg, l, full).into_iter().enumerate() {
            let lp = LstmDirParams::from_flat(p, &layout.layers[l][dir], h);
            let d_in = lp.d_in;
            let mut gates = vec![T::ZERO; tn * b * 4 * h];
            let mut cells = vec![T::ZERO; tn * b * h];
            let rows = span.rows() * b;
            let z = &mut gates[span.lo * b * 4 * h..(span.hi + 1) * b * 4 * h];
            gemm(
                rows,
                d_in,
                4 * h,
                T::ONE,
                View::rows(&x[span.lo * b * d_in..], d_in),
                View::rows_t(lp.w, d_in),
                T::ZERO,
                z,
                4 * h,
            );
            for row in z.chunks_exact_mut(4 * h) {
                for (v, &bias) in row.iter_mut().zip(lp.b) {
                    *v += bias;
                }
            }
            let first = span.first();
            for t in span.order() {
                let g = &mut gates[t * b * 4 * h..(t + 1) * b * 4 * h];
                let tp = (t != first).then(|| span.prev(t));
                if let Some(tp) = tp {
                    gemm(
                        b,
                        h,
                        4 * h,
                        T::ONE,
                        View::new(&out[tp * b * 2 * h + dir * h..], 2 * h, 1),
                        View::rows_t(lp.u, h),
                        T::ONE,
                        g,
                        4 * h,
                    );
                }
                let (c_before, c_rest) = cells.split_at_mut(t * b * h);
                let (c_now, c_after) = c_rest.split_at_mut(b * h);
                for bi in 0..b {
                    let gb = &mut g[bi * 4 * h..(bi + 1) * 4 * h];
                    let orow = &mut out[t * b * 2 * h + bi * 2 * h + dir * h..][..h];
                    for j in 0..h {
                        let c_prev = match tp {
                            None => T::ZERO,
                            Some(tp) if tp < t => c_before[tp * b * h + bi * h + j],
                            Some(_) => c_after[bi * h + j],
                        };
                        let (hv, cv) = unit_forward(gb, h, j, c_prev);
                        orow[j] = hv;
                        c_now[bi * h + j] = cv;
                    }
                }
            }
            if cache {
                gates_ld[dir] = gates;
                cells_ld[dir] = cells;
            }
        }
        outputs.push(out);
        if !cache && l >= 1 && !full {
            outputs[l - 1] = Vec::new();
        }
        gates_all.push(gates_ld);
        cells_all.push(cells_ld);
    }

    let pred = readout(cfg, layout, p, outputs.last().expect("at least one layer"), b);
    Tape {
        batch: b,
        window: tn,
        input: if cache { input } else { Vec::new() },
        outputs,
        gates: gates_all,
        cells: cells_all,
        pred,
        full,
        cached: cache,
    }
}

fn readout<T: Real>(cfg: &ModelConfig, layout: &Layout, p: &[T], top: &[T], b: usize) -> Vec<T> {
    let h2 = 2 * cfg.hidden;
    let od = layout.output_dim;
    let hc = &top[cfg.center() * b * h2..(cfg.center() + 1) * b * h2];
    let mut pred = Vec::with_capacity(b * od);
    for _ in 0..b {
        pred.extend_from_slice(&p[layout.dense_b..layout.dense_b + od]);
    }
    gemm(
        b,
        h2,
        od,
        T::ONE,
        View::rows(hc, h2),
        View::rows_t(&p[layout.dense_w..layout.dense_b], h2),
        T::ONE,
        &mut pred,
        od,
    );
    pred
}

/// Gradients of `Σ dpred · pred` with respect to every parameter, laid out
/// like the parameter vector.
pub(crate) fn backward<T: Real>(
    cfg: &ModelConfig,
    layout: &Layout,
    p: &[T],
    tape: &Tape<T>,
    dpred: &[T],
) -> Result<Vec<T>> {
    if !tape.cached {
        return Err(Error::State("backward needs a forward pass run with caching".into()));
    }
    let (tn, b, h) = (tape.window, tape.batch, cfg.hidden);
    let od = layout.output_dim;
    if tn != cfg.window || dpred.len() != b * od {
        return Err(Error::Shape(format!(
            "gradient of {} outputs for a batch of {b} x {od}",
            dpred.len()
        )));
    }
    let mut grad = vec![T::ZERO; layout.total];
    let h2 = 2 * h;
    let c = cfg.center();

    // dense readout
    let top = &tape.outputs[cfg.n_layers - 1];
    let hc = &top[c * b * h2..(c + 1) * b * h2];
    gemm(
        od,
        b,
        h2,
        T::ONE,
        View::rows_t(dpred, od),
        View::rows(hc, h2),
        T::ONE,
        &mut grad[layout.dense_w..layout.dense_b],
        h2,
    );
    for row in dpred.chunks_exact(od) {
        for (g, &d) in grad[layout.dense_b..layout.total].iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dout = vec![T::ZERO; tn * b * h2];
    gemm(
        b,
        od,
        h2,
        T::ONE,
        View::rows(dpred, od),
        View::rows(&p[layout.dense_w..layout.dense_b], h2),
        T::ZERO,
        &mut dout[c * b * h2..(c + 1) * b * h2],
        h2,
    );

    let mut dh_next = vec![T::ZERO; b * h];
    let mut dc_next = vec![T::ZERO; b * h];
    for l in (0..cfg.n_layers).rev() {
        let x: &[T] = if l == 0 { &tape.input } else { &tape.outputs[l - 1] };
        let out = &tape.outputs[l];
        let d_in = layout.layers[l][0].d_in;
        let mut din = if l > 0 { vec![T::ZERO; tn * b * d_in] } else { Vec::new() };
        for (dir, span) in spans(cfg, l, tape.full).into_iter().enumerate() {
            let o = layout.layers[l][dir];
            let lp = LstmDirParams::from_flat(p, &o, h);
            let gates = &tape.gates[l][dir];
            let cells = &tape.cells[l][dir];
            let mut da = vec![T::ZERO; tn * b * 4 * h];
            dh_next.iter_mut().for_each(|v| *v = T::ZERO);
            dc_next.iter_mut().for_each(|v| *v = T::ZERO);
            let first = span.first();
            let order: Vec<usize> = span.order().collect();
            for &t in order.iter().rev() {
                let tp = (t != first).then(|| span.prev(t));
                let g = &gates[t * b * 4 * h..(t + 1) * b * 4 * h];
                let dat = &mut da[t * b * 4 * h..(t + 1) * b * 4 * h];
                for bi in 0..b {
                    let gb = &g[bi * 4 * h..(bi + 1) * 4 * h];
                    let db = &mut dat[bi * 4 * h..(bi + 1) * 4 * h];
                    let drow = &dout[t * b * h2 + bi * h2 + dir * h..][..h];
                    for j in 0..h {
                        let k = bi * h + j;
                        let (i, f, gg, og) = (gb[j], gb[h + j], gb[2 * h + j], gb[3 * h + j]);
                        let cv = cells[t * b * h + k];
                        let c_prev = tp.map_or(T::ZERO, |tp| cells[tp * b * h + k]);
                        let tc = cv.tanh();
                        let dh = drow[j] + dh_next[k];
                        let dc = dh * og * (T::ONE - tc * tc) + dc_next[k];
                        dc_next[k] = dc * f;
                        db[j] = dc * gg * i * (T::ONE - i);
                        db[h + j] = dc * c_prev * f * (T::ONE - f);
                        db[2 * h + j] = dc * i * (T::ONE - gg * gg);
                        db[3 * h + j] = dh * tc * og * (T::ONE - og);
                    }
                }
                if tp.is_some() {
                    gemm(b, 4 * h, h, T::ONE, View::rows(dat, 4 * h), View::rows(lp.u, h), T::ZERO, &mut dh_next, h);
                }
            }

            let rows = span.rows() * b;
            let da_span = &da[span.lo * b * 4 * h..(span.hi + 1) * b * 4 * h];
            // dW += dA^T X
            gemm(
                4 * h,
                rows,
                d_in,
                T::ONE,
                View::rows_t(da_span, 4 * h),
                View::rows(&x[span.lo * b * d_in..], d_in),
                T::ONE,
                &mut grad[o.w..o.u],
                d_in,
            );
            for row in da_span.chunks_exact(4 * h) {
                for (gv, &d) in grad[o.b..o.b + 4 * h].iter_mut().zip(row) {
                    *gv += d;
                }
            }
            // dU += dA_t^T h_prev(t), all steps but the first
            if span.rows() > 1 {
                let (da_lo, h_lo) = if span.reverse {
                    (span.lo, span.lo + 1)
                } else {
                    (span.lo + 1, span.lo)
                };
                let k = (span.rows() - 1) * b;
                gemm(
                    4 * h,
                    k,
                    h,
                    T::ONE,
                    View::rows_t(&da[da_lo * b * 4 * h..], 4 * h),
                    View::new(&out[h_lo * b * h2 + dir * h..], h2, 1),
                    T::ONE,
                    &mut grad[o.u..o.b],
                    h,
                );
            }
            if l > 0 {
                gemm(
                    rows,
                    4 * h,
                    d_in,
                    T::ONE,
                    View::rows(da_span, 4 * h),
                    View::rows(lp.w, d_in),
                    T::ONE,
                    &mut din[span.lo * b * d_in..(span.hi + 1) * b * d_in],
                    d_in,
                );
            }
        }
        dout = din;
    }
    Ok(grad)
}
