//! Acoustic front-ends: log-mel (MFB), log-gammatone (GFB) and normalized
//! modulation coefficients (NMC), plus deltas, splicing and normalization.

pub mod archive;
pub mod gammatone;
pub mod mel;
pub mod transforms;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{HOP, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};

pub use archive::{read_archive, write_archive};
pub use gammatone::{am_envelopes, erb_bandwidth, gammatone_fbank, nmc_features, GammatoneBank};
pub use mel::{frame_signal, mel_fbank, MelFilterbank};
pub use transforms::{add_deltas, splice, stack_rows, Normalizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Mfb,
    Gfb,
    Nmc,
    Tv,
    Bn,
}

impl BaseKind {
    fn code(self) -> u8 {
        match self {
            BaseKind::Mfb => 0,
            BaseKind::Gfb => 1,
            BaseKind::Nmc => 2,
            BaseKind::Tv => 3,
            BaseKind::Bn => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => BaseKind::Mfb,
            1 => BaseKind::Gfb,
            2 => BaseKind::Nmc,
            3 => BaseKind::Tv,
            4 => BaseKind::Bn,
            _ => return None,
        })
    }
}

/// Kind of a feature matrix: base representation plus applied transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureKind {
    pub base: BaseKind,
    pub deltas: bool,
    pub spliced: bool,
}

impl FeatureKind {
    pub const fn plain(base: BaseKind) -> Self {
        Self {
            base,
            deltas: false,
            spliced: false,
        }
    }

    /// One-byte archive tag: base code in the low bits, bit 4 deltas, bit 7 spliced.
    pub fn tag(self) -> u8 {
        self.base.code() | (self.deltas as u8) << 4 | (self.spliced as u8) << 7
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        if tag & 0b0110_1000 != 0 {
            return None;
        }
        Some(Self {
            base: BaseKind::from_code(tag & 0x07)?,
            deltas: tag & 0x10 != 0,
            spliced: tag & 0x80 != 0,
        })
    }
}

/// Frames x dimensions matrix of finite values, 10 ms frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f32>,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f32>, kind: FeatureKind) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("{kind:?} features contain NaN/Inf")));
        }
        Ok(Self { data, kind })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    None,
    ZCorpus,
    ZUtterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: usize,
    /// Window length in samples (25 ms).
    pub window: usize,
    /// Hop in samples (10 ms).
    pub hop: usize,
    pub n_fft: usize,
    pub n_channels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Floor applied to power before taking logs.
    pub log_floor: f64,
    pub delta_window: usize,
    /// Per-utterance normalization applied by the extractors. Corpus-level
    /// normalization is done with [`Normalizer`].
    pub norm: Norm,
    /// Cut-off of the AM envelope low-pass, Hz.
    pub am_cutoff_hz: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            window: WINDOW,
            hop: HOP,
            n_fft: 512,
            n_channels: 40,
            fmin: 64.0,
            fmax: 8000.0,
            log_floor: 1e-10,
            delta_window: 2,
            norm: Norm::None,
            am_cutoff_hz: 30.0,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 < self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::Validation(format!(
                "need 0 < fmin ({}) < fmax ({}) <= {nyquist}",
                self.fmin, self.fmax
            )));
        }
        if self.window == 0 || self.hop == 0 || self.n_fft < self.window {
            return Err(Error::Validation("window, hop must be > 0 and n_fft >= window".into()));
        }
        if self.n_channels == 0 || self.log_floor <= 0.0 || self.delta_window == 0 {
            return Err(Error::Validation(
                "n_channels, delta_window and log_floor must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.window {
            0
        } else {
            1 + (n_samples - self.window) / self.hop
        }
    }

    pub(crate) fn check_length(&self, n_samples: usize) -> Result<usize> {
        if n_samples < self.window {
            return Err(Error::TooShort {
                needed: self.window,
                got: n_samples,
            });
        }
        Ok(self.frame_count(n_samples))
    }
}

/// Base features of one waveform: MFB, GFB or NMC.
pub fn extract(samples: &[f32], base: BaseKind, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    match base {
        BaseKind::Mfb => mel_fbank(&frame_signal(samples, cfg)?, cfg),
        BaseKind::Gfb => gammatone_fbank(samples, cfg),
        BaseKind::Nmc => nmc_features(samples, cfg),
        BaseKind::Tv | BaseKind::Bn => Err(Error::Validation(format!(
            "{base:?} features are produced by a model, not the front-end"
        ))),
    }
}

/// Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Applies `cfg.norm` when it is per-utterance.
pub(crate) fn finish(data: Array2<f64>, kind: FeatureKind, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    let fm = FeatureMatrix::new(data.mapv(|v| v as f32), kind)?;
    match cfg.norm {
        Norm::ZUtterance => Normalizer::fit(std::slice::from_ref(&fm))?.apply(&fm),
        _ => Ok(fm),
    }
}
