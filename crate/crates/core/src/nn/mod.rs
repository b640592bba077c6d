//! Residual networks realizing grid architectures.
//!
//! A network is an initial layer, `j` stacks of `i` residual blocks whose
//! width doubles from stack to stack, and an affine classification layer
//! followed by softmax. Between stacks an uncounted projection maps to the
//! doubled width (a strided 1x1 convolution in the convolutional family).
//!
//! Every block computes `x + dropout(relu(L_beta(... relu(L_1(x)))))`, so a
//! block whose internal weights are all zero is the identity map.
//!
//! The network is compiled into a flat list of [`graph::Op`]s executed by a
//! small forward/backward interpreter.

mod graph;
mod model;
mod train;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::{ArchPoint, BlockKind, BlockSpec};
use crate::data::InputShape;
use crate::{Error, Result};

pub use graph::Mode;
pub use model::{evaluate, instantiate, LossKind, ModelHandle};
pub use train::{train, TrainConfig};

/// Dropout rate used when none is configured.
pub const DEFAULT_DROPOUT: f64 = 0.1;

const CONV_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: ArchPoint,
    pub block: BlockSpec,
    /// `base_width * 2^(k-1)` for stack `k`.
    pub stack_widths: Vec<usize>,
    pub input_shape: InputShape,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn new(
        arch: ArchPoint,
        block: BlockSpec,
        input_shape: InputShape,
        n_classes: usize,
        dropout_rate: f64,
    ) -> Result<Self> {
        block.validate()?;
        if arch.i == 0 || arch.j == 0 {
            return Err(Error::invalid("architecture coordinates must be >= 1"));
        }
        let stack_widths = (0..arch.j)
            .map(|k| {
                1usize
                    .checked_shl(k as u32)
                    .and_then(|m| m.checked_mul(block.base_width))
                    .ok_or_else(|| Error::invalid("stack width overflows"))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = NetworkSpec { arch, block, stack_widths, input_shape, n_classes, dropout_rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.block.validate()?;
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate must lie in [0, 1)"));
        }
        if self.stack_widths.len() != self.arch.j {
            return Err(Error::invalid("stack_widths must have one entry per stack"));
        }
        if self.stack_widths.first() != Some(&self.block.base_width)
            || self.stack_widths.windows(2).any(|w| w[1] != 2 * w[0])
        {
            return Err(Error::invalid("stack widths must start at base_width and double"));
        }
        if self.input_shape.is_empty() {
            return Err(Error::IncompatibleSpec("empty input shape".into()));
        }
        if self.block.alpha != 2 {
            return Err(Error::IncompatibleSpec(format!(
                "{} networks have one initial and one classification layer (alpha = 2), got alpha = {}",
                self.block.kind, self.block.alpha
            )));
        }
        if self.block.kind == BlockKind::ResidualConv && !matches!(self.input_shape, InputShape::Image { .. }) {
            return Err(Error::IncompatibleSpec("residual-conv needs an image input shape".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    /// Width of the activations entering the classification layer.
    pub fn embedding_dim(&self) -> usize {
        *self.stack_widths.last().expect("validated spec has stacks")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRole {
    Initial,
    Projection { stack: usize },
    Block { stack: usize, block: usize, layer: usize },
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Affine { inputs: usize, outputs: usize },
    /// Square kernel, channels-last; `batch_norm` replaces the bias.
    Conv { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, batch_norm: bool },
}

/// One parameterized layer and where its parameters live in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerInfo {
    pub role: LayerRole,
    pub kind: LayerKind,
    pub offset: usize,
    /// Counted towards the depth `i*j*beta + alpha`.
    pub counted: bool,
    /// Offset of the running mean/var pair in the buffer vector (batch norm).
    pub buffer_offset: Option<usize>,
}

impl LayerInfo {
    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Affine { inputs, outputs } => inputs * outputs,
            LayerKind::Conv { in_channels, out_channels, kernel, .. } => out_channels * kernel * kernel * in_channels,
        }
    }

    /// Biases, or batch-norm scale and shift.
    pub fn shift_count(&self) -> usize {
        match self.kind {
            LayerKind::Affine { outputs, .. } => outputs,
            LayerKind::Conv { out_channels, batch_norm: true, .. } => 2 * out_channels,
            LayerKind::Conv { out_channels, batch_norm: false, .. } => out_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.shift_count()
    }

    pub fn units(&self) -> usize {
        match self.kind {
            LayerKind::Affine { outputs, .. } => outputs,
            LayerKind::Conv { out_channels, .. } => out_channels,
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Affine { inputs, .. } => inputs,
            LayerKind::Conv { in_channels, kernel, .. } => in_channels * kernel * kernel,
        }
    }

    pub fn outputs(&self) -> usize {
        self.units()
    }
}

/// Static structure of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    layers: Vec<LayerInfo>,
    params: usize,
    buffers: usize,
}

impl Layout {
    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn buffer_count(&self) -> usize {
        self.buffers
    }

    pub fn unit_count(&self) -> usize {
        self.layers.iter().map(LayerInfo::units).sum()
    }

    /// Mask of parameters subject to weight decay (weights, not biases or
    /// batch-norm scale/shift).
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = alloc::vec![false; self.params];
        for l in &self.layers {
            mask[l.offset..l.offset + l.weight_count()].fill(true);
        }
        mask
    }

    fn push(&mut self, role: LayerRole, kind: LayerKind, counted: bool) -> usize {
        let bn = matches!(kind, LayerKind::Conv { batch_norm: true, .. });
        let mut info = LayerInfo { role, kind, offset: self.params, counted, buffer_offset: None };
        if bn {
            info.buffer_offset = Some(self.buffers);
            self.buffers += 2 * info.units();
        }
        self.params += info.param_count();
        self.layers.push(info);
        self.layers.len() - 1
    }
}

/// Parameterized layers of `spec` in execution order.
pub fn layout(spec: &NetworkSpec) -> Result<Layout> {
    Ok(build(spec)?.0)
}

pub(crate) fn build(spec: &NetworkSpec) -> Result<(Layout, Vec<graph::Op>)> {
    spec.validate()?;
    match spec.block.kind {
        BlockKind::ResidualDense => Ok(build_dense(spec)),
        BlockKind::ResidualConv => build_conv(spec),
    }
}

fn build_dense(spec: &NetworkSpec) -> (Layout, Vec<graph::Op>) {
    use graph::Op;
    let mut layout = Layout { layers: Vec::new(), params: 0, buffers: 0 };
    let mut ops = Vec::new();
    let widths = &spec.stack_widths;
    let l = layout.push(
        LayerRole::Initial,
        LayerKind::Affine { inputs: spec.input_len(), outputs: widths[0] },
        true,
    );
    ops.push(Op::Layer(l));
    ops.push(Op::Relu);
    for (s, &w) in widths.iter().enumerate() {
        if s > 0 {
            let l = layout.push(
                LayerRole::Projection { stack: s },
                LayerKind::Affine { inputs: widths[s - 1], outputs: w },
                false,
            );
            ops.push(Op::Layer(l));
        }
        for b in 0..spec.arch.i {
            ops.push(Op::Push);
            for layer in 0..spec.block.beta {
                let l = layout.push(
                    LayerRole::Block { stack: s, block: b, layer },
                    LayerKind::Affine { inputs: w, outputs: w },
                    true,
                );
                ops.push(Op::Layer(l));
                ops.push(Op::Relu);
            }
            ops.push(Op::Dropout);
            ops.push(Op::AddPop);
        }
    }
    let l = layout.push(
        LayerRole::Classifier,
        LayerKind::Affine { inputs: *widths.last().unwrap(), outputs: spec.n_classes },
        true,
    );
    ops.push(Op::Layer(l));
    (layout, ops)
}

fn build_conv(spec: &NetworkSpec) -> Result<(Layout, Vec<graph::Op>)> {
    use graph::Op;
    let InputShape::Image { height, width, channels } = spec.input_shape else {
        return Err(Error::IncompatibleSpec("residual-conv needs an image input shape".into()));
    };
    let mut layout = Layout { layers: Vec::new(), params: 0, buffers: 0 };
    let mut ops = Vec::new();
    let widths = &spec.stack_widths;
    let (mut h, mut w) = (height, width);
    let conv = |cin, cout, kernel, stride| LayerKind::Conv {
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        batch_norm: true,
    };
    let l = layout.push(LayerRole::Initial, conv(channels, widths[0], CONV_KERNEL, 1), true);
    ops.push(Op::Conv { layer: l, height: h, width: w });
    ops.push(Op::Relu);
    for (s, &c) in widths.iter().enumerate() {
        if s > 0 {
            let l = layout.push(LayerRole::Projection { stack: s }, conv(widths[s - 1], c, 1, 2), false);
            ops.push(Op::Conv { layer: l, height: h, width: w });
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        for b in 0..spec.arch.i {
            ops.push(Op::Push);
            for layer in 0..spec.block.beta {
                let l = layout.push(LayerRole::Block { stack: s, block: b, layer }, conv(c, c, CONV_KERNEL, 1), true);
                ops.push(Op::Conv { layer: l, height: h, width: w });
                ops.push(Op::Relu);
            }
            ops.push(Op::Dropout);
            ops.push(Op::AddPop);
        }
    }
    let c = *widths.last().unwrap();
    ops.push(Op::AvgPool { channels: c, spatial: h * w });
    let l = layout.push(LayerRole::Classifier, LayerKind::Affine { inputs: c, outputs: spec.n_classes }, true);
    ops.push(Op::Layer(l));
    Ok((layout, ops))
}
