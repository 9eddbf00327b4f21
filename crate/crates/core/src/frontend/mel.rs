use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{finish, hamming, BaseKind, FeatureKind, FeatureMatrix, FrontendConfig};
use crate::error::Result;

/// Hamming-windowed frames, `1 + (N - window) / hop` rows.
pub fn frame_signal(samples: &[f32], cfg: &FrontendConfig) -> Result<Array2<f64>> {
    let n_frames = cfg.check_length(samples.len())?;
    let win = hamming(cfg.window);
    let mut frames = Array2::zeros((n_frames, cfg.window));
    for (t, mut row) in frames.outer_iter_mut().enumerate() {
        let start = t * cfg.hop;
        for (i, v) in row.iter_mut().enumerate() {
            *v = samples[start + i] as f64 * win[i];
        }
    }
    Ok(frames)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_channels + 2` edge frequencies in Hz.
    edges: Vec<f64>,
    /// `n_channels x (n_fft/2 + 1)` weights.
    weights: Array2<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let n = cfg.n_channels;
        let edges: Vec<f64> = (0..n + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n + 1) as f64))
            .collect();
        let n_bins = cfg.n_fft / 2 + 1;
        let mut weights = Array2::zeros((n, n_bins));
        for k in 0..n {
            let (l, c, r) = (edges[k], edges[k + 1], edges[k + 2]);
            for j in 0..n_bins {
                let f = j as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                weights[[k, j]] = w;
            }
        }
        Ok(Self { edges, weights })
    }

    pub fn center_hz(&self, channel: usize) -> f64 {
        self.edges[channel + 1]
    }

    pub fn n_channels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

/// Power spectra `|X_k|^2`, one row per frame.
pub fn power_spectrum(frames: &Array2<f64>, n_fft: usize) -> Array2<f64> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut out = Array2::zeros((frames.nrows(), n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for (t, frame) in frames.outer_iter().enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(frame.iter()) {
            b.re = v;
        }
        fft.process(&mut buf);
        for j in 0..n_bins {
            out[[t, j]] = buf[j].norm_sqr();
        }
    }
    out
}

/// Log mel filterbank energies of windowed frames.
pub fn mel_fbank(frames: &Array2<f64>, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    let bank = MelFilterbank::new(cfg)?;
    let power = power_spectrum(frames, cfg.n_fft);
    let energies = power.dot(&bank.weights.t());
    let logs = energies.mapv(|e| e.max(cfg.log_floor).ln());
    finish(logs, FeatureKind::plain(BaseKind::Mfb), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn frame_counts() {
        let cfg = FrontendConfig::default();
        assert_eq!(frame_signal(&[0.0; 400], &cfg).unwrap().nrows(), 1);
        assert_eq!(frame_signal(&[0.0; 560], &cfg).unwrap().nrows(), 2);
        assert!(matches!(frame_signal(&[0.0; 399], &cfg), Err(Error::TooShort { .. })));
    }

    #[test]
    fn silence_hits_floor() {
        let cfg = FrontendConfig::default();
        let fm = mel_fbank(&frame_signal(&[0.0; 1600], &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(fm.dims(), 40);
        let floor = (cfg.log_floor.ln()) as f32;
        assert!(fm.data.iter().all(|&v| v == floor));
    }

    #[test]
    fn tone_peaks_in_its_channel() {
        let cfg = FrontendConfig::default();
        let bank = MelFilterbank::new(&cfg).unwrap();
        for k in 0..cfg.n_channels {
            let f = bank.center_hz(k);
            let tone: Vec<f32> = (0..1600)
                .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).sin() as f32 * 0.5)
                .collect();
            let fm = mel_fbank(&frame_signal(&tone, &cfg).unwrap(), &cfg).unwrap();
            for row in fm.data.outer_iter() {
                let arg = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert_eq!(arg, k, "tone at {f:.1} Hz");
            }
        }
    }

    #[test]
    fn doubling_amplitude_adds_constant() {
        let cfg = FrontendConfig::default();
        let x: Vec<f32> = (0..2000).map(|n| ((n * 7919) % 101) as f32 / 101.0 - 0.5).collect();
        let x2: Vec<f32> = x.iter().map(|v| v * 2.0).collect();
        let a = mel_fbank(&frame_signal(&x, &cfg).unwrap(), &cfg).unwrap();
        let b = mel_fbank(&frame_signal(&x2, &cfg).unwrap(), &cfg).unwrap();
        let shift = (4.0f64).ln() as f32;
        for (p, q) in a.data.iter().zip(b.data.iter()) {
            assert!((q - p - shift).abs() < 1e-4);
        }
    }
}
