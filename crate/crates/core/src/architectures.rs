//! Builders for the acoustic models (DNN, CNN, TFCNN, fCNN) and the
//! speech-inversion CNN.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Branch, ConvSpec, Geometry, LayerSpec, NetworkSpec};

pub const BOTTLENECK_DIM: usize = 60;
pub const BOTTLENECK_LAYER: usize = 3;
/// Context of the acoustic models: 8 frames either side.
pub const AM_CONTEXT: usize = 8;
/// Context of the inversion model: 35 frames either side.
pub const INVERSION_CONTEXT: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Dnn,
    Cnn,
    Tfcnn,
    Fcnn,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Dnn, ArchKind::Cnn, ArchKind::Tfcnn, ArchKind::Fcnn];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Dnn => "dnn",
            ArchKind::Cnn => "cnn",
            ArchKind::Tfcnn => "tfcnn",
            ArchKind::Fcnn => "fcnn",
        }
    }

    pub fn needs_tv(self) -> bool {
        self == ArchKind::Fcnn
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown architecture `{s}` (dnn|cnn|tfcnn|fcnn)")))
    }
}

/// Hidden-layer and convolution sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub freq_filters: usize,
    pub freq_span: usize,
    pub freq_pool: usize,
    pub time_filters: usize,
    pub time_span: usize,
    pub time_pool: usize,
    /// Filters of the time convolution over articulatory trajectories.
    pub tv_filters: usize,
    pub tv_span: usize,
    pub tv_pool: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    /// 4 x 1024, for models trained on dysarthric data only.
    Small,
    /// 6 x 2048, for models trained on the larger normal-speech corpus.
    Large,
    /// 4 x 128 with narrow convolutions; sized for single-core test runs.
    Desk,
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "large" => Ok(SizeClass::Large),
            "desk" => Ok(SizeClass::Desk),
            _ => Err(Error::Validation(format!("unknown size class `{s}` (small|large|desk)"))),
        }
    }
}

impl SizeClass {
    pub fn config(self) -> ArchConfig {
        let (hidden_layers, hidden_units, freq_filters, time_filters) = match self {
            SizeClass::Small => (4, 1024, 200, 75),
            SizeClass::Large => (6, 2048, 200, 75),
            SizeClass::Desk => (4, 128, 24, 12),
        };
        ArchConfig {
            hidden_layers,
            hidden_units,
            freq_filters,
            freq_span: 8,
            freq_pool: 3,
            time_filters,
            time_span: 8,
            time_pool: 5,
            tv_filters: time_filters,
            tv_span: 8,
            tv_pool: 5,
        }
    }
}

/// Shape of the spliced network input: the acoustic block first, then the
/// optional articulatory block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub acoustic: Geometry,
    pub tv: Option<Geometry>,
}

impl InputLayout {
    /// 40 bins x 17 frames x (static, delta, delta-delta).
    pub const fn filterbank() -> Self {
        Self {
            acoustic: Geometry::new(40, 2 * AM_CONTEXT + 1, 3),
            tv: None,
        }
    }

    /// Filterbank input followed by 6 TVs x 17 frames.
    pub const fn filterbank_with_tv() -> Self {
        Self {
            acoustic: Geometry::new(40, 2 * AM_CONTEXT + 1, 3),
            tv: Some(Geometry::new(crate::corpus::lexicon::TV_COUNT, 2 * AM_CONTEXT + 1, 1)),
        }
    }

    pub fn dim(&self) -> usize {
        self.acoustic.dim() + self.tv.map_or(0, |g| g.dim())
    }
}

/// Linear bottleneck of width `dim` in place of hidden layer `layer` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub dim: usize,
    pub layer: usize,
}

impl Default for Bottleneck {
    fn default() -> Self {
        Self {
            dim: BOTTLENECK_DIM,
            layer: BOTTLENECK_LAYER,
        }
    }
}

fn freq_conv(g: Geometry, cfg: &ArchConfig) -> LayerSpec {
    LayerSpec::FreqConv(ConvSpec {
        geometry: g,
        n_filters: cfg.freq_filters,
        span: cfg.freq_span,
        pool: cfg.freq_pool,
    })
}

fn time_conv(g: Geometry, n_filters: usize, span: usize, pool: usize) -> LayerSpec {
    LayerSpec::TimeConv(ConvSpec {
        geometry: g,
        n_filters,
        span,
        pool,
    })
}

/// Sigmoid stack with optional bottleneck, topped by a softmax.
fn push_stack(
    layers: &mut Vec<LayerSpec>,
    mut input: usize,
    cfg: &ArchConfig,
    n_classes: usize,
    bottleneck: Option<Bottleneck>,
) -> Result<()> {
    if let Some(b) = bottleneck {
        if b.layer == 0 || b.layer > cfg.hidden_layers {
            return Err(Error::Validation(format!(
                "bottleneck at hidden layer {} but the network has {} hidden layers",
                b.layer, cfg.hidden_layers
            )));
        }
        if b.dim == 0 {
            return Err(Error::Validation("bottleneck dimension must be >= 1".into()));
        }
    }
    for h in 1..=cfg.hidden_layers {
        let layer = match bottleneck {
            Some(b) if b.layer == h => LayerSpec::Linear { input, output: b.dim },
            _ => LayerSpec::FullSigmoid {
                input,
                output: cfg.hidden_units,
            },
        };
        input = layer.output_dim();
        layers.push(layer);
    }
    layers.push(LayerSpec::Softmax {
        input,
        output: n_classes,
    });
    Ok(())
}

/// Builds an acoustic model. `input.tv` must be present exactly for fCNN.
pub fn build(
    kind: ArchKind,
    cfg: &ArchConfig,
    input: &InputLayout,
    n_classes: usize,
    bottleneck: Option<Bottleneck>,
) -> Result<NetworkSpec> {
    if cfg.hidden_layers == 0 || cfg.hidden_units == 0 || n_classes == 0 {
        return Err(Error::Validation("need >= 1 hidden layer, unit and class".into()));
    }
    match (kind.needs_tv(), input.tv.is_some()) {
        (true, false) => return Err(Error::Validation("fcnn requires a TV input branch".into())),
        (false, true) => {
            return Err(Error::Validation(format!("{kind} does not take a TV input branch")))
        }
        _ => {}
    }
    let g = input.acoustic;
    let mut layers = Vec::new();
    let first = match kind {
        ArchKind::Dnn => None,
        ArchKind::Cnn => Some(freq_conv(g, cfg)),
        ArchKind::Tfcnn | ArchKind::Fcnn => {
            let mut branches = vec![
                Branch {
                    offset: 0,
                    layer: freq_conv(g, cfg),
                },
                Branch {
                    offset: 0,
                    layer: time_conv(g, cfg.time_filters, cfg.time_span, cfg.time_pool),
                },
            ];
            if let Some(tv) = input.tv {
                branches.push(Branch {
                    offset: g.dim(),
                    layer: time_conv(tv, cfg.tv_filters, cfg.tv_span, cfg.tv_pool),
                });
            }
            Some(LayerSpec::Fusion {
                input: input.dim(),
                branches,
            })
        }
    };
    let stack_in = match first {
        Some(l) => {
            let d = l.output_dim();
            layers.push(l);
            d
        }
        None => input.dim(),
    };
    push_stack(&mut layers, stack_in, cfg, n_classes, bottleneck)?;
    NetworkSpec::new(layers)
}

/// Fully connected network over flat features, used for AMs on bottleneck
/// features (which have no time-frequency layout).
pub fn build_dnn(input_dim: usize, cfg: &ArchConfig, n_classes: usize, bottleneck: Option<Bottleneck>) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    push_stack(&mut layers, input_dim, cfg, n_classes, bottleneck)?;
    NetworkSpec::new(layers)
}

/// Sizes of the inversion CNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionArch {
    pub filters: usize,
    pub span: usize,
    pub pool: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
}

impl InversionArch {
    /// 200 filters, pool 3, three 2048-unit hidden layers.
    pub const FULL: Self = Self {
        filters: 200,
        span: 8,
        pool: 3,
        hidden_layers: 3,
        hidden_units: 2048,
    };
    pub const DESK: Self = Self {
        filters: 32,
        span: 8,
        pool: 3,
        hidden_layers: 3,
        hidden_units: 256,
    };
}

/// Frequency convolution over spliced features, sigmoid stack, linear output.
pub fn build_inversion(input: Geometry, arch: &InversionArch, n_outputs: usize) -> Result<NetworkSpec> {
    let conv = LayerSpec::FreqConv(ConvSpec {
        geometry: input,
        n_filters: arch.filters,
        span: arch.span,
        pool: arch.pool,
    });
    let mut d = conv.output_dim();
    let mut layers = vec![conv];
    for _ in 0..arch.hidden_layers {
        layers.push(LayerSpec::FullSigmoid {
            input: d,
            output: arch.hidden_units,
        });
        d = arch.hidden_units;
    }
    layers.push(LayerSpec::Linear {
        input: d,
        output: n_outputs,
    });
    NetworkSpec::new(layers)
}
