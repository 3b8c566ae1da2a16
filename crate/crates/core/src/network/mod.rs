//! The EETnet layer graph: float forward, hand-written backward, losses,
//! Adam and the grid-classification helpers.

mod adam;
pub(crate) mod checkpoint;
mod forward;
mod grid;
mod loss;
pub(crate) mod ops;
mod params;
mod real;
mod train;

pub use adam::Adam;
pub use checkpoint::{CHECKPOINT_MAGIC, 
    decode_checkpoint, decode_spec, encode_checkpoint, encode_spec, read_checkpoint,
    write_checkpoint,
};
pub use forward::{backward, forward, predict, ForwardCache};
pub use grid::{cell_to_center, label_to_cell, GridSpec, NOT_VISIBLE_CLASS};
pub use loss::{loss, Target};
pub use params::{LayerParams, Params};
pub use real::Real;
pub use train::{
    mean_loss, split_sets, target_for, train, train_from, train_loop, EncodedSet, EpochRecord,
    InputEncoder, NoHooks, TrainConfig, TrainHooks, TrainLog, DEFAULT_INPUT_EXPONENT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REGRESSION_OUTPUTS: usize = 2;
pub const GRID_SIZE: usize = 24;
pub const CLASSIFICATION_OUTPUTS: usize = GRID_SIZE * GRID_SIZE + 1;
pub const DEFAULT_FC1: usize = 64;
pub const CANONICAL_CHANNELS: [usize; 6] = [8, 16, 32, 32, 64, 64];
/// Network input is the ROI downsampled by 2: 157x90 -> 78x45.
pub const CANONICAL_INPUT: Shape = Shape { c: 1, h: 45, w: 78 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub fn flat(n: usize) -> Self {
        Shape { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    /// 3x3 kernel, stride 1, zero "same" padding.
    Conv3x3 { in_ch: usize, out_ch: usize },
    Relu,
    /// 2x2 window, stride 2, floor on odd sizes.
    MaxPool2x2,
    Flatten,
    Dense { inputs: usize, outputs: usize },
}

impl LayerSpec {
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Conv3x3 { .. } | LayerSpec::Dense { .. })
    }

    /// Weights + biases.
    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_ch, out_ch } => in_ch * out_ch * 9,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs,
            _ => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { out_ch, .. } => out_ch,
            LayerSpec::Dense { outputs, .. } => outputs,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Output shape for a given input, or a description of the mismatch.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv3x3 { in_ch, out_ch } => {
                if input.c != in_ch {
                    return Err(Error::Shape(format!(
                        "conv expects {in_ch} input channels, got {}",
                        input.c
                    )));
                }
                Ok(Shape::new(out_ch, input.h, input.w))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::MaxPool2x2 => {
                if input.h < 2 || input.w < 2 {
                    return Err(Error::Shape(format!(
                        "maxpool on {}x{} plane",
                        input.h, input.w
                    )));
                }
                Ok(Shape::new(input.c, input.h / 2, input.w / 2))
            }
            LayerSpec::Flatten => Ok(Shape::flat(input.len())),
            LayerSpec::Dense { inputs, outputs } => {
                if input.len() != inputs {
                    return Err(Error::Shape(format!(
                        "dense expects {inputs} inputs, got {}",
                        input.len()
                    )));
                }
                Ok(Shape::flat(outputs))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Regression,
    Classification,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Regression => REGRESSION_OUTPUTS,
            Head::Classification => CLASSIFICATION_OUTPUTS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Regression => "regression",
            Head::Classification => "classification",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Head::Regression),
            "classification" => Ok(Head::Classification),
            other => Err(Error::UnknownName {
                kind: "head",
                name: other.to_string(),
                nearest: None,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
}

impl NetworkSpec {
    /// Checks that every layer accepts its input and returns the shape after
    /// each layer (index `i` is the output of `layers[i]`).
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            cur = l
                .output_shape(cur)
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", l.name())))?;
            out.push(cur);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Indices into `layers` of the conv and dense layers.
    pub fn param_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_parameterized())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn param_layers(&self) -> Vec<LayerSpec> {
        self.layers.iter().copied().filter(LayerSpec::is_parameterized).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn conv_param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv3x3 { .. }))
            .map(LayerSpec::param_count)
            .sum()
    }

    /// Checks the EETnet family layout: three (conv, relu, conv, relu, pool)
    /// groups, flatten, dense, relu, dense with the head's output count.
    pub fn validate_family(&self) -> Result<()> {
        self.shapes()?;
        let l = &self.layers;
        let bad = |why: &str| Err(Error::Shape(format!("not an EETnet layout: {why}")));
        if l.len() != 19 {
            return bad("expected 19 layers");
        }
        for g in 0..3 {
            let s = &l[g * 5..g * 5 + 5];
            let ok = matches!(s[0], LayerSpec::Conv3x3 { .. })
                && s[1] == LayerSpec::Relu
                && matches!(s[2], LayerSpec::Conv3x3 { .. })
                && s[3] == LayerSpec::Relu
                && s[4] == LayerSpec::MaxPool2x2;
            if !ok {
                return bad("backbone group is not conv-relu-conv-relu-pool");
            }
        }
        let tail_ok = l[15] == LayerSpec::Flatten
            && matches!(l[16], LayerSpec::Dense { .. })
            && l[17] == LayerSpec::Relu
            && matches!(l[18], LayerSpec::Dense { outputs, .. } if outputs == self.head.outputs());
        if !tail_ok {
            return bad("tail is not flatten-dense-relu-dense(head)");
        }
        Ok(())
    }

    pub fn fc1_width(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::Dense { outputs, .. } => Some(*outputs),
            _ => None,
        })
    }
}

/// Builds an EETnet-family spec for any input geometry and channel widths.
pub fn eetnet_spec(input: Shape, channels: [usize; 6], fc1: usize, head: Head) -> NetworkSpec {
    let mut layers = Vec::with_capacity(19);
    let mut in_ch = input.c;
    let (mut h, mut w) = (input.h, input.w);
    for pair in channels.chunks(2) {
        for &out_ch in pair {
            layers.push(LayerSpec::Conv3x3 { in_ch, out_ch });
            layers.push(LayerSpec::Relu);
            in_ch = out_ch;
        }
        layers.push(LayerSpec::MaxPool2x2);
        h /= 2;
        w /= 2;
    }
    let flat = in_ch * h * w;
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense { inputs: flat, outputs: fc1 });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense { inputs: fc1, outputs: head.outputs() });
    NetworkSpec { input, layers, head }
}

pub fn canonical_spec(head: Head) -> NetworkSpec {
    canonical_spec_with(head, DEFAULT_FC1)
}

pub fn canonical_spec_with(head: Head, fc1: usize) -> NetworkSpec {
    eetnet_spec(CANONICAL_INPUT, CANONICAL_CHANNELS, fc1, head)
}
