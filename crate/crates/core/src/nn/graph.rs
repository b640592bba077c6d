//! Forward/backward interpreter over a compiled op list.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{LayerInfo, LayerKind, Layout};
use crate::rng::Prng;
use crate::tensor::{axpy, dot, Matrix};

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    /// Affine layer (index into the layout).
    Layer(usize),
    /// Convolution + batch norm on a `height x width` input.
    Conv { layer: usize, height: usize, width: usize },
    Relu,
    /// Saves the current activation as a skip branch.
    Push,
    Dropout,
    /// Adds the most recently saved skip branch.
    AddPop,
    AvgPool { channels: usize, spatial: usize },
}

/// Forward-pass behaviour of dropout and batch norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch norm uses batch statistics.
    Train,
    /// Deterministic: no dropout, batch norm uses running statistics.
    Eval,
    /// Dropout active, batch norm uses running statistics.
    McDropout,
}

impl Mode {
    fn dropout_active(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

pub(crate) enum Cache {
    Input(Matrix),
    Conv(ConvCache),
    Relu(Matrix),
    Dropout(Vec<f64>),
    Pool { channels: usize, spatial: usize },
    Skip,
}

pub(crate) struct ConvCache {
    input: Matrix,
    height: usize,
    width: usize,
    /// Normalized conv output.
    xhat: Matrix,
    inv_std: Vec<f64>,
    /// Statistics were taken from the batch (and must be differentiated).
    batch_stats: bool,
    pub(crate) mean: Vec<f64>,
    pub(crate) var: Vec<f64>,
}

pub(crate) struct Tape {
    entries: Vec<(usize, Cache)>,
}

impl Tape {
    /// Exponential moving update of the batch-norm running statistics.
    pub(crate) fn update_running(&self, ops: &[Op], layout: &Layout, buffers: &mut [f64], momentum: f64) {
        for (op_idx, cache) in &self.entries {
            if let (Op::Conv { layer, .. }, Cache::Conv(c)) = (&ops[*op_idx], cache) {
                if !c.batch_stats {
                    continue;
                }
                let info = &layout.layers()[*layer];
                let Some(off) = info.buffer_offset else { continue };
                let ch = info.units();
                let count = c.xhat.rows() * (c.xhat.cols() / ch);
                let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
                for k in 0..ch {
                    buffers[off + k] = (1.0 - momentum) * buffers[off + k] + momentum * c.mean[k];
                    buffers[off + ch + k] = (1.0 - momentum) * buffers[off + ch + k] + momentum * c.var[k] * unbias;
                }
            }
        }
    }
}

pub(crate) struct Net<'a> {
    pub layout: &'a Layout,
    pub ops: &'a [Op],
    pub params: &'a [f64],
    pub buffers: &'a [f64],
    pub dropout: f64,
}

fn conv_geometry(info: &LayerInfo, height: usize, width: usize) -> (usize, usize, usize, usize, usize, usize, usize) {
    let LayerKind::Conv { in_channels, out_channels, kernel, stride, .. } = info.kind else {
        unreachable!("conv op on a non-conv layer")
    };
    let pad = (kernel - 1) / 2;
    let oh = (height + 2 * pad - kernel) / stride + 1;
    let ow = (width + 2 * pad - kernel) / stride + 1;
    (in_channels, out_channels, kernel, stride, pad, oh, ow)
}

/// Gathers the receptive field of output position `(oy, ox)` (zero padded),
/// laid out as `(ky, kx, channel)`.
#[allow(clippy::too_many_arguments)]
fn gather_patch(
    sample: &[f64],
    height: usize,
    width: usize,
    cin: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oy: usize,
    ox: usize,
    patch: &mut [f64],
) {
    for ky in 0..kernel {
        for kx in 0..kernel {
            let dst = &mut patch[(ky * kernel + kx) * cin..(ky * kernel + kx + 1) * cin];
            let iy = (oy * stride + ky) as isize - pad as isize;
            let ix = (ox * stride + kx) as isize - pad as isize;
            if iy < 0 || ix < 0 || iy >= height as isize || ix >= width as isize {
                dst.fill(0.0);
            } else {
                let src = (iy as usize * width + ix as usize) * cin;
                dst.copy_from_slice(&sample[src..src + cin]);
            }
        }
    }
}

impl Net<'_> {
    fn affine_forward(&self, info: &LayerInfo, x: &Matrix) -> Matrix {
        let LayerKind::Affine { inputs, outputs } = info.kind else { unreachable!() };
        debug_assert_eq!(x.cols(), inputs);
        let w = &self.params[info.offset..info.offset + inputs * outputs];
        let b = &self.params[info.offset + inputs * outputs..info.offset + info.param_count()];
        let mut out = Matrix::zeros(x.rows(), outputs);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            for o in 0..outputs {
                orow[o] = b[o] + dot(&w[o * inputs..(o + 1) * inputs], xr);
            }
        }
        out
    }

    fn affine_backward(&self, info: &LayerInfo, x: &Matrix, g: &Matrix, grads: &mut [f64]) -> Matrix {
        let LayerKind::Affine { inputs, outputs } = info.kind else { unreachable!() };
        let w = &self.params[info.offset..info.offset + inputs * outputs];
        let (gw, gb) = grads[info.offset..info.offset + info.param_count()].split_at_mut(inputs * outputs);
        let mut dx = Matrix::zeros(x.rows(), inputs);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let gr = g.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..outputs {
                let go = gr[o];
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                axpy(go, xr, &mut gw[o * inputs..(o + 1) * inputs]);
                axpy(go, &w[o * inputs..(o + 1) * inputs], dxr);
            }
        }
        dx
    }

    fn conv_forward(&self, info: &LayerInfo, x: &Matrix, height: usize, width: usize, mode: Mode) -> (Matrix, ConvCache) {
        let (cin, cout, kernel, stride, pad, oh, ow) = conv_geometry(info, height, width);
        let plen = kernel * kernel * cin;
        let w = &self.params[info.offset..info.offset + cout * plen];
        let n = x.rows();
        let mut z = Matrix::zeros(n, oh * ow * cout);
        let mut patch = vec![0.0; plen];
        for r in 0..n {
            let sample = x.row(r);
            let zr = z.row_mut(r);
            for oy in 0..oh {
                for ox in 0..ow {
                    gather_patch(sample, height, width, cin, kernel, stride, pad, oy, ox, &mut patch);
                    let base = (oy * ow + ox) * cout;
                    for o in 0..cout {
                        zr[base + o] = dot(&w[o * plen..(o + 1) * plen], &patch);
                    }
                }
            }
        }
        // batch norm, channels last
        let gamma = &self.params[info.offset + cout * plen..info.offset + cout * plen + cout];
        let beta = &self.params[info.offset + cout * plen + cout..info.offset + cout * plen + 2 * cout];
        let count = n * oh * ow;
        let batch_stats = mode == Mode::Train;
        let (mean, var) = if batch_stats {
            let mut mean = vec![0.0; cout];
            let mut var = vec![0.0; cout];
            for chunk in z.as_slice().chunks_exact(cout) {
                for k in 0..cout {
                    mean[k] += chunk[k];
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for chunk in z.as_slice().chunks_exact(cout) {
                for k in 0..cout {
                    let d = chunk[k] - mean[k];
                    var[k] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            (mean, var)
        } else {
            let off = info.buffer_offset.expect("batch-norm layer has buffers");
            (self.buffers[off..off + cout].to_vec(), self.buffers[off + cout..off + 2 * cout].to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPS)).collect();
        let mut xhat = z;
        let mut y = Matrix::zeros(n, oh * ow * cout);
        for (xc, yc) in xhat.as_mut_slice().chunks_exact_mut(cout).zip(y.as_mut_slice().chunks_exact_mut(cout)) {
            for k in 0..cout {
                xc[k] = (xc[k] - mean[k]) * inv_std[k];
                yc[k] = gamma[k] * xc[k] + beta[k];
            }
        }
        let cache = ConvCache { input: x.clone(), height, width, xhat, inv_std, batch_stats, mean, var };
        (y, cache)
    }

    fn conv_backward(&self, info: &LayerInfo, c: &ConvCache, g: &Matrix, grads: &mut [f64]) -> Matrix {
        let (cin, cout, kernel, stride, pad, oh, ow) = conv_geometry(info, c.height, c.width);
        let plen = kernel * kernel * cin;
        let n = g.rows();
        let count = (n * oh * ow) as f64;
        let gamma = &self.params[info.offset + cout * plen..info.offset + cout * plen + cout];
        // batch norm backward
        let mut sum_g = vec![0.0; cout];
        let mut sum_gx = vec![0.0; cout];
        for (gc, xc) in g.as_slice().chunks_exact(cout).zip(c.xhat.as_slice().chunks_exact(cout)) {
            for k in 0..cout {
                sum_g[k] += gc[k];
                sum_gx[k] += gc[k] * xc[k];
            }
        }
        {
            let gp = &mut grads[info.offset + cout * plen..info.offset + cout * plen + 2 * cout];
            for k in 0..cout {
                gp[k] += sum_gx[k];
                gp[cout + k] += sum_g[k];
            }
        }
        let mut dz = Matrix::zeros(n, oh * ow * cout);
        for ((dc, gc), xc) in dz
            .as_mut_slice()
            .chunks_exact_mut(cout)
            .zip(g.as_slice().chunks_exact(cout))
            .zip(c.xhat.as_slice().chunks_exact(cout))
        {
            for k in 0..cout {
                let scale = gamma[k] * c.inv_std[k];
                dc[k] = if c.batch_stats {
                    scale * (gc[k] - sum_g[k] / count - xc[k] * sum_gx[k] / count)
                } else {
                    scale * gc[k]
                };
            }
        }
        // convolution backward
        let w = &self.params[info.offset..info.offset + cout * plen];
        let mut dx = Matrix::zeros(n, c.height * c.width * cin);
        let mut patch = vec![0.0; plen];
        let mut dpatch = vec![0.0; plen];
        for r in 0..n {
            let sample = c.input.row(r);
            let dzr = dz.row(r);
            let dxr = dx.row_mut(r);
            for oy in 0..oh {
                for ox in 0..ow {
                    gather_patch(sample, c.height, c.width, cin, kernel, stride, pad, oy, ox, &mut patch);
                    dpatch.fill(0.0);
                    let base = (oy * ow + ox) * cout;
                    for o in 0..cout {
                        let go = dzr[base + o];
                        if go == 0.0 {
                            continue;
                        }
                        axpy(go, &patch, &mut grads[info.offset + o * plen..info.offset + (o + 1) * plen]);
                        axpy(go, &w[o * plen..(o + 1) * plen], &mut dpatch);
                    }
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= c.height as isize || ix >= c.width as isize {
                                continue;
                            }
                            let dst = (iy as usize * c.width + ix as usize) * cin;
                            let src = (ky * kernel + kx) * cin;
                            for ch in 0..cin {
                                dxr[dst + ch] += dpatch[src + ch];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Runs the first `upto` ops on `x`. When `tape` is given, caches needed by
    /// [`Net::backward`] are recorded.
    pub(crate) fn forward(
        &self,
        mut x: Matrix,
        mode: Mode,
        rng: &mut Prng,
        upto: usize,
        mut tape: Option<&mut Tape>,
    ) -> Matrix {
        let mut skips: Vec<Matrix> = Vec::new();
        for (idx, op) in self.ops[..upto].iter().enumerate() {
            let cache = match *op {
                Op::Layer(l) => {
                    let out = self.affine_forward(&self.layout.layers()[l], &x);
                    let prev = core::mem::replace(&mut x, out);
                    Cache::Input(prev)
                }
                Op::Conv { layer, height, width } => {
                    let (out, cache) = self.conv_forward(&self.layout.layers()[layer], &x, height, width, mode);
                    x = out;
                    Cache::Conv(cache)
                }
                Op::Relu => {
                    x.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                    if tape.is_some() {
                        Cache::Relu(x.clone())
                    } else {
                        Cache::Skip
                    }
                }
                Op::Push => {
                    skips.push(x.clone());
                    Cache::Skip
                }
                Op::Dropout => {
                    if mode.dropout_active() && self.dropout > 0.0 {
                        let keep = 1.0 / (1.0 - self.dropout);
                        let mask: Vec<f64> = (0..x.as_slice().len())
                            .map(|_| if rng.gen::<f64>() < self.dropout { 0.0 } else { keep })
                            .collect();
                        x.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        Cache::Dropout(mask)
                    } else {
                        Cache::Skip
                    }
                }
                Op::AddPop => {
                    let skip = skips.pop().expect("unbalanced skip connection");
                    x.as_mut_slice().iter_mut().zip(skip.as_slice()).for_each(|(v, s)| *v += s);
                    Cache::Skip
                }
                Op::AvgPool { channels, spatial } => {
                    let mut out = Matrix::zeros(x.rows(), channels);
                    for r in 0..x.rows() {
                        let orow = out.row_mut(r);
                        for chunk in x.row(r).chunks_exact(channels) {
                            for k in 0..channels {
                                orow[k] += chunk[k];
                            }
                        }
                        orow.iter_mut().for_each(|v| *v /= spatial as f64);
                    }
                    x = out;
                    Cache::Pool { channels, spatial }
                }
            };
            if let Some(t) = tape.as_deref_mut() {
                t.entries.push((idx, cache));
            }
        }
        x
    }

    pub(crate) fn new_tape() -> Tape {
        Tape { entries: Vec::new() }
    }

    /// Accumulates parameter gradients into `grads` given the gradient of the
    /// loss with respect to the output of the recorded forward pass.
    pub(crate) fn backward(&self, tape: &Tape, mut g: Matrix, grads: &mut [f64]) {
        let mut skip_grads: Vec<Matrix> = Vec::new();
        for (idx, cache) in tape.entries.iter().rev() {
            match (self.ops[*idx], cache) {
                (Op::Layer(l), Cache::Input(x)) => {
                    g = self.affine_backward(&self.layout.layers()[l], x, &g, grads);
                }
                (Op::Conv { layer, .. }, Cache::Conv(c)) => {
                    g = self.conv_backward(&self.layout.layers()[layer], c, &g, grads);
                }
                (Op::Relu, Cache::Relu(out)) => {
                    g.as_mut_slice().iter_mut().zip(out.as_slice()).for_each(|(gv, &o)| {
                        if o <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                }
                (Op::Dropout, Cache::Dropout(mask)) => {
                    g.as_mut_slice().iter_mut().zip(mask).for_each(|(gv, m)| *gv *= m);
                }
                (Op::Dropout, Cache::Skip) => {}
                (Op::AddPop, _) => skip_grads.push(g.clone()),
                (Op::Push, _) => {
                    let s = skip_grads.pop().expect("unbalanced skip connection");
                    g.as_mut_slice().iter_mut().zip(s.as_slice()).for_each(|(gv, sv)| *gv += sv);
                }
                (Op::AvgPool { .. }, &Cache::Pool { channels, spatial }) => {
                    let mut dx = Matrix::zeros(g.rows(), channels * spatial);
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        for chunk in dx.row_mut(r).chunks_exact_mut(channels) {
                            for k in 0..channels {
                                chunk[k] = gr[k] / spatial as f64;
                            }
                        }
                    }
                    g = dx;
                }
                _ => unreachable!("tape entry does not match its op"),
            }
        }
    }
}
