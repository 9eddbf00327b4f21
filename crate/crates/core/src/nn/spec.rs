//! Network topology descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of a spliced feature vector: `index = t * (channels * freq) + c * freq + f`.
///
/// For spliced MFB with deltas this is 40 bins x 17 frames x 3 streams
/// (static, delta, delta-delta).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub freq: usize,
    pub time: usize,
    pub channels: usize,
}

impl Geometry {
    pub const fn new(freq: usize, time: usize, channels: usize) -> Self {
        Self {
            freq,
            time,
            channels,
        }
    }

    pub const fn dim(&self) -> usize {
        self.freq * self.time * self.channels
    }

    pub const fn index(&self, t: usize, c: usize, f: usize) -> usize {
        t * self.channels * self.freq + c * self.freq + f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvAxis {
    Freq,
    Time,
}

/// One-dimensional convolution with sigmoid units and non-overlapping
/// max-pooling. The filter spans `span` steps along its axis and the whole
/// extent of the other two axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub geometry: Geometry,
    pub n_filters: usize,
    pub span: usize,
    pub pool: usize,
}

impl ConvSpec {
    fn axis_len(&self, axis: ConvAxis) -> usize {
        match axis {
            ConvAxis::Freq => self.geometry.freq,
            ConvAxis::Time => self.geometry.time,
        }
    }

    /// Convolution output positions, `axis_len - span + 1`.
    pub fn positions(&self, axis: ConvAxis) -> usize {
        self.axis_len(axis).saturating_sub(self.span) + 1
    }

    /// Positions after pooling; a remainder shorter than `pool` is dropped.
    pub fn pooled(&self, axis: ConvAxis) -> usize {
        self.positions(axis) / self.pool
    }

    /// Weights per filter: `span` times the product of the other two axes.
    pub fn patch_len_for(&self, axis: ConvAxis) -> usize {
        self.geometry.dim() / self.axis_len(axis) * self.span
    }

    /// Input index of every (position, patch element) pair, row-major.
    pub fn patch_indices(&self, axis: ConvAxis) -> Vec<usize> {
        let g = self.geometry;
        let p_count = self.positions(axis);
        let mut idx = Vec::with_capacity(p_count * self.patch_len_for(axis));
        for p in 0..p_count {
            match axis {
                ConvAxis::Freq => {
                    for t in 0..g.time {
                        for c in 0..g.channels {
                            for s in 0..self.span {
                                idx.push(g.index(t, c, p + s));
                            }
                        }
                    }
                }
                ConvAxis::Time => {
                    for s in 0..self.span {
                        for c in 0..g.channels {
                            for f in 0..g.freq {
                                idx.push(g.index(p + s, c, f));
                            }
                        }
                    }
                }
            }
        }
        idx
    }

    fn validate(&self, axis: ConvAxis) -> Result<()> {
        let len = self.axis_len(axis);
        if self.n_filters == 0 || self.span == 0 || self.pool == 0 {
            return Err(Error::Geometry("conv filters, span and pool must be >= 1".into()));
        }
        if self.span > len {
            return Err(Error::Geometry(format!("span {} exceeds axis length {len}", self.span)));
        }
        if self.pooled(axis) == 0 {
            return Err(Error::Geometry(format!(
                "pool {} larger than {} conv positions",
                self.pool,
                self.positions(axis)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// First input column read by the branch.
    pub offset: usize,
    pub layer: LayerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    FullSigmoid { input: usize, output: usize },
    Linear { input: usize, output: usize },
    FreqConv(ConvSpec),
    TimeConv(ConvSpec),
    /// Parallel branches over slices of the input, outputs concatenated.
    Fusion { input: usize, branches: Vec<Branch> },
    Softmax { input: usize, output: usize },
}

impl LayerSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            LayerSpec::FullSigmoid { input, .. }
            | LayerSpec::Linear { input, .. }
            | LayerSpec::Softmax { input, .. }
            | LayerSpec::Fusion { input, .. } => *input,
            LayerSpec::FreqConv(c) | LayerSpec::TimeConv(c) => c.geometry.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LayerSpec::FullSigmoid { output, .. }
            | LayerSpec::Linear { output, .. }
            | LayerSpec::Softmax { output, .. } => *output,
            LayerSpec::FreqConv(c) => c.pooled(ConvAxis::Freq) * c.n_filters,
            LayerSpec::TimeConv(c) => c.pooled(ConvAxis::Time) * c.n_filters,
            LayerSpec::Fusion { branches, .. } => branches.iter().map(|b| b.layer.output_dim()).sum(),
        }
    }

    /// Parameter count (weights + biases).
    pub fn n_params(&self) -> usize {
        match self {
            LayerSpec::FullSigmoid { input, output }
            | LayerSpec::Linear { input, output }
            | LayerSpec::Softmax { input, output } => input * output + output,
            LayerSpec::FreqConv(c) => c.patch_len_for(ConvAxis::Freq) * c.n_filters + c.n_filters,
            LayerSpec::TimeConv(c) => c.patch_len_for(ConvAxis::Time) * c.n_filters + c.n_filters,
            LayerSpec::Fusion { branches, .. } => branches.iter().map(|b| b.layer.n_params()).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::FullSigmoid { input, output }
            | LayerSpec::Linear { input, output }
            | LayerSpec::Softmax { input, output } => {
                if *input == 0 || *output == 0 {
                    return Err(Error::Geometry("layer dimensions must be >= 1".into()));
                }
                Ok(())
            }
            LayerSpec::FreqConv(c) => c.validate(ConvAxis::Freq),
            LayerSpec::TimeConv(c) => c.validate(ConvAxis::Time),
            LayerSpec::Fusion { input, branches } => {
                if branches.is_empty() {
                    return Err(Error::Geometry("fusion layer without branches".into()));
                }
                for b in branches {
                    if matches!(b.layer, LayerSpec::Fusion { .. } | LayerSpec::Softmax { .. }) {
                        return Err(Error::Geometry("fusion branches must be conv or hidden layers".into()));
                    }
                    b.layer.validate()?;
                    if b.offset + b.layer.input_dim() > *input {
                        return Err(Error::Geometry(format!(
                            "branch reads columns {}..{} beyond fusion input {input}",
                            b.offset,
                            b.offset + b.layer.input_dim()
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::FullSigmoid { .. } => "full_sigmoid",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::FreqConv(_) => "freq_conv",
            LayerSpec::TimeConv(_) => "time_conv",
            LayerSpec::Fusion { .. } => "fusion",
            LayerSpec::Softmax { .. } => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Geometry("network has no layers".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::Geometry(format!(
                    "layer {i} ({}) outputs {} but layer {} ({}) expects {}",
                    w[0].name(),
                    w[0].output_dim(),
                    i + 1,
                    w[1].name(),
                    w[1].input_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::output_dim)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::n_params).sum()
    }

    /// Index of the first linear (bottleneck) layer that is not the output layer.
    pub fn bottleneck_index(&self) -> Option<usize> {
        let last = self.layers.len() - 1;
        self.layers[..last]
            .iter()
            .position(|l| matches!(l, LayerSpec::Linear { .. }))
    }
}
