use alloc::vec;
use alloc::vec::Vec;

use super::graph::{Mode, Net, Op};
use super::{build, LayerRole, Layout, NetworkSpec};
use crate::data::Dataset;
use crate::rng::{self, Prng};
use crate::tensor::{softmax_in_place, Matrix};
use crate::{Error, Result};

const PREDICT_CHUNK: usize = 512;

/// An instantiated network: specification, flat parameter vector and
/// batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    spec: NetworkSpec,
    layout: Layout,
    ops: Vec<Op>,
    params: Vec<f64>,
    buffers: Vec<f64>,
    trained: bool,
    train_history: Vec<f64>,
    epochs_trained: usize,
    sgd_steps: usize,
}

/// Fresh network with seeded He-normal weights, zero biases and unit
/// batch-norm scales. The last layer of every residual branch is scaled down
/// by `1/sqrt(total blocks)` so deep stacks start close to the identity.
pub fn instantiate(spec: &NetworkSpec, seed: u64) -> Result<ModelHandle> {
    let (layout, ops) = build(spec)?;
    let mut rng = rng::prng(seed);
    let mut params = vec![0.0; layout.param_count()];
    let total_blocks = (spec.arch.i * spec.arch.j) as f64;
    for info in layout.layers() {
        let fan_in = info.fan_in() as f64;
        let mut std = match info.role {
            LayerRole::Classifier | LayerRole::Projection { .. } => libm::sqrt(1.0 / fan_in),
            _ => libm::sqrt(2.0 / fan_in),
        };
        if let LayerRole::Block { layer, .. } = info.role {
            if layer + 1 == spec.block.beta {
                std /= libm::sqrt(total_blocks);
            }
        }
        let weights = &mut params[info.offset..info.offset + info.weight_count()];
        for w in weights.iter_mut() {
            *w = std * rng::normal(&mut rng);
        }
        if info.buffer_offset.is_some() {
            // batch-norm scale starts at one, shift at zero
            let start = info.offset + info.weight_count();
            params[start..start + info.units()].fill(1.0);
        }
    }
    let mut buffers = vec![0.0; layout.buffer_count()];
    for info in layout.layers() {
        if let Some(off) = info.buffer_offset {
            buffers[off + info.units()..off + 2 * info.units()].fill(1.0);
        }
    }
    Ok(ModelHandle {
        spec: spec.clone(),
        layout,
        ops,
        params,
        buffers,
        trained: false,
        train_history: Vec::new(),
        epochs_trained: 0,
        sgd_steps: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    ZeroOne,
    CrossEntropy,
}

/// Mean loss of `model` over `data`.
pub fn evaluate(model: &ModelHandle, data: &Dataset, loss: LossKind) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let probs = model.predict_proba(data.features())?;
    let total: f64 = data
        .labels()
        .iter()
        .enumerate()
        .map(|(r, &y)| match loss {
            LossKind::ZeroOne => f64::from(u8::from(probs.argmax_row(r) != y)),
            LossKind::CrossEntropy => -libm::log(probs.get(r, y).max(f64::MIN_POSITIVE)),
        })
        .sum();
    Ok(total / data.len() as f64)
}

impl ModelHandle {
    /// Rebuilds a handle from stored parts (checkpoints).
    pub fn from_parts(spec: NetworkSpec, params: Vec<f64>, buffers: Vec<f64>, trained: bool) -> Result<Self> {
        let (layout, ops) = build(&spec)?;
        if params.len() != layout.param_count() {
            return Err(Error::ShapeMismatch { expected: layout.param_count(), got: params.len() });
        }
        if buffers.len() != layout.buffer_count() {
            return Err(Error::ShapeMismatch { expected: layout.buffer_count(), got: buffers.len() });
        }
        Ok(ModelHandle { spec, layout, ops, params, buffers, trained, train_history: Vec::new(), epochs_trained: 0, sgd_steps: 0 })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
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

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Mean training loss of every epoch run so far.
    pub fn train_history(&self) -> &[f64] {
        &self.train_history
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub(crate) fn record_epoch(&mut self, loss: f64) {
        self.train_history.push(loss);
        self.epochs_trained += 1;
        self.trained = true;
    }

    pub(crate) fn update_running_stats(&mut self, tape: &super::graph::Tape, momentum: f64) {
        tape.update_running(&self.ops, &self.layout, &mut self.buffers, momentum);
    }

    pub(crate) fn record_steps(&mut self, steps: usize) {
        self.sgd_steps += steps;
    }

    /// Minibatch updates applied so far.
    pub fn sgd_steps(&self) -> usize {
        self.sgd_steps
    }

    pub(crate) fn net_with<'a>(&'a self, params: &'a [f64]) -> Net<'a> {
        Net { layout: &self.layout, ops: &self.ops, params, buffers: &self.buffers, dropout: self.spec.dropout_rate }
    }

    fn net(&self) -> Net<'_> {
        self.net_with(&self.params)
    }

    pub(crate) fn to_matrix(&self, inputs: &[f32]) -> Result<Matrix> {
        let d = self.spec.input_len();
        if inputs.len() % d != 0 {
            return Err(Error::ShapeMismatch { expected: d, got: inputs.len() % d });
        }
        Ok(Matrix::from_vec(inputs.len() / d, d, inputs.iter().map(|&v| f64::from(v)).collect()))
    }

    fn run_chunked(&self, inputs: &[f32], mode: Mode, upto: usize, rng: &mut Prng, softmax: bool) -> Result<Matrix> {
        let d = self.spec.input_len();
        let all = self.to_matrix(inputs)?;
        let net = self.net();
        let mut rows: Vec<f64> = Vec::new();
        let mut cols = 0;
        for start in (0..all.rows()).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(all.rows());
            let chunk = Matrix::from_vec(end - start, d, all.as_slice()[start * d..end * d].to_vec());
            let mut out = net.forward(chunk, mode, rng, upto, None);
            if softmax {
                for r in 0..out.rows() {
                    softmax_in_place(out.row_mut(r));
                }
            }
            cols = out.cols();
            rows.extend_from_slice(out.as_slice());
        }
        if all.rows() == 0 {
            cols = if upto == self.ops.len() { self.spec.n_classes } else { self.spec.embedding_dim() };
        }
        Ok(Matrix::from_vec(all.rows(), cols, rows))
    }

    /// Raw classifier outputs with dropout disabled.
    pub fn logits(&self, inputs: &[f32]) -> Result<Matrix> {
        self.run_chunked(inputs, Mode::Eval, self.ops.len(), &mut rng::prng(0), false)
    }

    /// Class probabilities (`n x n_classes`) with dropout disabled.
    pub fn predict_proba(&self, inputs: &[f32]) -> Result<Matrix> {
        self.run_chunked(inputs, Mode::Eval, self.ops.len(), &mut rng::prng(0), true)
    }

    /// `t_passes` stochastic forward passes with freshly sampled dropout
    /// masks; batch norm stays in inference mode.
    pub fn predict_proba_mc(&self, inputs: &[f32], t_passes: usize, seed: u64) -> Result<Vec<Matrix>> {
        if t_passes == 0 {
            return Err(Error::invalid("t_passes must be >= 1"));
        }
        let mut rng = rng::prng(rng::derive(seed, &[rng::tag::MC]));
        (0..t_passes).map(|_| self.run_chunked(inputs, Mode::McDropout, self.ops.len(), &mut rng, true)).collect()
    }

    /// Activations entering the classification layer (`n x final width`).
    pub fn embed(&self, inputs: &[f32]) -> Result<Matrix> {
        self.run_chunked(inputs, Mode::Eval, self.ops.len() - 1, &mut rng::prng(0), false)
    }

    /// Applies only the classification layer and softmax to embeddings.
    pub fn classify_embeddings(&self, embeddings: &Matrix) -> Result<Matrix> {
        if embeddings.cols() != self.spec.embedding_dim() {
            return Err(Error::ShapeMismatch { expected: self.spec.embedding_dim(), got: embeddings.cols() });
        }
        let net = self.net();
        let last = self.ops.len() - 1;
        let sub = Net { ops: &self.ops[last..], ..net };
        let mut out = sub.forward(embeddings.clone(), Mode::Eval, &mut rng::prng(0), 1, None);
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        Ok(out)
    }

    /// Mean softmax cross-entropy over the batch and its gradient with respect
    /// to `params` (which must have this model's layout). No weight decay.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        inputs: &[f32],
        labels: &[usize],
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<(f64, Vec<f64>)> {
        let x = self.to_matrix(inputs)?;
        let mut grads = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(params, x, labels, mode, &mut rng::prng(dropout_seed), &mut grads, None)?;
        Ok((loss, grads))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_gradient(
        &self,
        params: &[f64],
        x: Matrix,
        labels: &[usize],
        mode: Mode,
        rng: &mut Prng,
        grads: &mut [f64],
        tape_out: Option<&mut Option<super::graph::Tape>>,
    ) -> Result<f64> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), got: params.len() });
        }
        if x.rows() != labels.len() {
            return Err(Error::ShapeMismatch { expected: x.rows(), got: labels.len() });
        }
        if labels.is_empty() {
            return Err(Error::EmptyData);
        }
        let net = self.net_with(params);
        let mut tape = Net::new_tape();
        let mut out = net.forward(x, mode, rng, self.ops.len(), Some(&mut tape));
        let n = labels.len() as f64;
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= self.spec.n_classes {
                return Err(Error::invalid("label out of range"));
            }
            let row = out.row_mut(r);
            softmax_in_place(row);
            loss -= libm::log(row[y].max(f64::MIN_POSITIVE));
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        net.backward(&tape, out, grads);
        if let Some(slot) = tape_out {
            *slot = Some(tape);
        }
        Ok(loss / n)
    }
}
