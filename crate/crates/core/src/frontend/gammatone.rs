//! Fourth-order gammatone filterbank on the ERB scale.
//!
//! Each channel is a cascade of four complex one-pole sections applied to
//! the signal shifted down by the channel's centre frequency, which yields
//! the all-pole gammatone approximation with unit gain at the centre.

use ndarray::Array2;
use std::f64::consts::PI;

use super::{finish, hamming, BaseKind, FeatureKind, FeatureMatrix, FrontendConfig};
use crate::error::Result;

/// Equivalent rectangular bandwidth, Hz: `24.7 (4.37 f / 1000 + 1)`.
pub fn erb_bandwidth(f_hz: f64) -> f64 {
    24.7 * (4.37 * f_hz / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f_hz`).
pub fn erb_rate(f_hz: f64) -> f64 {
    21.4 * (4.37 * f_hz / 1000.0 + 1.0).log10()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Debug, Clone)]
pub struct GammatoneBank {
    pub centers: Vec<f64>,
    pub sample_rate: f64,
}

impl GammatoneBank {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = (erb_rate(cfg.fmin), erb_rate(cfg.fmax));
        let n = cfg.n_channels;
        let centers = (0..n)
            .map(|i| {
                if n == 1 {
                    cfg.fmin
                } else {
                    erb_rate_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64)
                }
            })
            .collect();
        Ok(Self {
            centers,
            sample_rate: cfg.sample_rate as f64,
        })
    }

    /// Real output of every channel, `channels x samples`.
    pub fn filter(&self, samples: &[f32]) -> Vec<Vec<f64>> {
        self.centers
            .iter()
            .map(|&fc| {
                let a = (-2.0 * PI * 1.019 * erb_bandwidth(fc) / self.sample_rate).exp();
                let omega = 2.0 * PI * fc / self.sample_rate;
                let mut re = [0.0f64; 4];
                let mut im = [0.0f64; 4];
                samples
                    .iter()
                    .enumerate()
                    .map(|(n, &x)| {
                        let ph = (omega * n as f64) % (2.0 * PI);
                        let (s, c) = ph.sin_cos();
                        // shift down: x * e^{-j w n}
                        let (mut in_re, mut in_im) = (x as f64 * c, -(x as f64) * s);
                        for k in 0..4 {
                            re[k] = (1.0 - a) * in_re + a * re[k];
                            im[k] = (1.0 - a) * in_im + a * im[k];
                            in_re = re[k];
                            in_im = im[k];
                        }
                        // shift back up and keep twice the real part
                        2.0 * (in_re * c - in_im * s)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Hamming-weighted mean of `x^2` over each analysis frame.
fn framed_power(x: &[f64], n_frames: usize, cfg: &FrontendConfig, win: &[f64], norm: f64) -> Vec<f64> {
    (0..n_frames)
        .map(|t| {
            let start = t * cfg.hop;
            x[start..start + cfg.window]
                .iter()
                .zip(win)
                .map(|(v, w)| w * v * v)
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// Log energy of each gammatone channel per frame.
pub fn gammatone_fbank(samples: &[f32], cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    let n_frames = cfg.check_length(samples.len())?;
    let bank = GammatoneBank::new(cfg)?;
    let win = hamming(cfg.window);
    let norm: f64 = win.iter().sum();
    let mut out = Array2::zeros((n_frames, cfg.n_channels));
    for (ch, y) in bank.filter(samples).iter().enumerate() {
        for (t, p) in framed_power(y, n_frames, cfg, &win, norm).into_iter().enumerate() {
            out[[t, ch]] = p.max(cfg.log_floor).ln();
        }
    }
    finish(out, FeatureKind::plain(BaseKind::Gfb), cfg)
}

/// Amplitude-modulation envelope of each channel: half-wave rectification
/// followed by two one-pole low-pass sections at `cfg.am_cutoff_hz`.
pub fn am_envelopes(samples: &[f32], cfg: &FrontendConfig) -> Result<Vec<Vec<f64>>> {
    let bank = GammatoneBank::new(cfg)?;
    let b = (-2.0 * PI * cfg.am_cutoff_hz / cfg.sample_rate as f64).exp();
    Ok(bank
        .filter(samples)
        .into_iter()
        .map(|y| {
            let (mut s1, mut s2) = (0.0, 0.0);
            y.into_iter()
                .map(|v| {
                    s1 = (1.0 - b) * v.max(0.0) + b * s1;
                    s2 = (1.0 - b) * s1 + b * s2;
                    s2
                })
                .collect()
        })
        .collect())
}

/// Modulation coefficients: framed AM power per channel, compressed with a
/// 1/15 power law after flooring.
pub fn nmc_features(samples: &[f32], cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    let n_frames = cfg.check_length(samples.len())?;
    let win = hamming(cfg.window);
    let norm: f64 = win.iter().sum();
    let mut out = Array2::zeros((n_frames, cfg.n_channels));
    for (ch, env) in am_envelopes(samples, cfg)?.iter().enumerate() {
        for (t, p) in framed_power(env, n_frames, cfg, &win, norm).into_iter().enumerate() {
            out[[t, ch]] = p.max(cfg.log_floor).powf(1.0 / 15.0);
        }
    }
    finish(out, FeatureKind::plain(BaseKind::Nmc), cfg)
}
