//! Additive noise at a prescribed signal-to-noise ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::hash::Hasher;

use super::synth::{mix_seed, Utterance};
use super::SAMPLE_RATE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    BabbleLike,
    White,
    Hum,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::BabbleLike, NoiseKind::White, NoiseKind::Hum];

    fn tag(self) -> u64 {
        match self {
            NoiseKind::BabbleLike => 1,
            NoiseKind::White => 2,
            NoiseKind::Hum => 3,
        }
    }
}

/// Clean signal, the scaled noise that was added to it, and their sum.
#[derive(Debug, Clone)]
pub struct NoisyMix {
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
    pub mixed: Vec<f32>,
    pub scale: f64,
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// `10 log10(P_signal / P_noise)`.
pub fn measured_snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (power(signal) / power(noise)).log10()
}

/// Raw (unscaled) noise of the given kind.
pub fn noise_signal(kind: NoiseKind, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, kind.tag()));
    let fs = SAMPLE_RATE as f64;
    match kind {
        NoiseKind::White => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        NoiseKind::Hum => {
            let base = 50.0 + rng.gen_range(0.0..10.0);
            let phases: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            (0..len)
                .map(|n| {
                    let t = n as f64 / fs;
                    phases
                        .iter()
                        .enumerate()
                        .map(|(h, ph)| (2.0 * PI * base * (h + 1) as f64 * t + ph).sin() / (h + 1) as f64)
                        .sum()
                })
                .collect()
        }
        NoiseKind::BabbleLike => {
            // Several talkers: filtered pulse trains with syllable-rate envelopes.
            let mut out = vec![0.0; len];
            for _ in 0..6 {
                let f0 = rng.gen_range(90.0..220.0);
                let formant = rng.gen_range(300.0..2500.0);
                let bw: f64 = 150.0;
                let syl_hz = rng.gen_range(3.0..6.0);
                let syl_phase = rng.gen_range(0.0..2.0 * PI);
                let r = (-PI * bw / fs).exp();
                let b = 2.0 * r * (2.0 * PI * formant / fs).cos();
                let c = -r * r;
                let (mut y1, mut y2, mut phase) = (0.0, 0.0, rng.gen_range(0.0..1.0));
                for (n, o) in out.iter_mut().enumerate() {
                    phase += f0 / fs;
                    let x = if phase >= 1.0 {
                        phase -= 1.0;
                        1.0
                    } else {
                        0.0
                    };
                    let y = (1.0 - b - c) * x + b * y1 + c * y2;
                    y2 = y1;
                    y1 = y;
                    let t = n as f64 / fs;
                    let env = 0.5 * (1.0 + (2.0 * PI * syl_hz * t + syl_phase).sin());
                    *o += y * env;
                }
            }
            out
        }
    }
}

/// Adds noise scaled so that `10 log10(P_clean / P_noise) == snr_db`.
pub fn mix_components(clean: &[f32], kind: NoiseKind, snr_db: f64, seed: u64) -> Result<NoisyMix> {
    if !(0.0..=100.0).contains(&snr_db) {
        return Err(Error::Validation(format!("snr_db {snr_db} outside [0, 100]")));
    }
    let clean: Vec<f64> = clean.iter().map(|&x| x as f64).collect();
    let p_sig = power(&clean);
    if p_sig <= 0.0 {
        return Err(Error::Degenerate("signal has zero power".into()));
    }
    let raw = noise_signal(kind, clean.len(), seed);
    let p_noise = power(&raw);
    if p_noise <= 0.0 {
        return Err(Error::Degenerate("noise has zero power".into()));
    }
    let scale = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise: Vec<f64> = raw.iter().map(|x| x * scale).collect();
    let mixed = clean.iter().zip(&noise).map(|(c, n)| (c + n) as f32).collect();
    Ok(NoisyMix {
        clean,
        noise,
        mixed,
        scale,
    })
}

fn id_seed(id: &str) -> u64 {
    // FNV-1a; stable across runs and platforms.
    let mut h = FnvHasher(0xcbf2_9ce4_8422_2325);
    h.write(id.as_bytes());
    h.finish()
}

struct FnvHasher(u64);

impl Hasher for FnvHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Noisy copy of an utterance; labels and TV truth are carried over.
///
/// The noise realization is seeded from the utterance id, so repeated calls
/// agree.
pub fn mix_noise(u: &Utterance, kind: NoiseKind, snr_db: f64) -> Result<Utterance> {
    let mix = mix_components(&u.samples, kind, snr_db, id_seed(&u.id))?;
    Ok(Utterance {
        id: u.id.clone(),
        samples: mix.mixed,
        transcription: u.transcription.clone(),
        frame_labels: u.frame_labels.clone(),
        tv_truth: u.tv_truth.clone(),
    })
}

/// Multi-condition augmentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAugment {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub kinds: Vec<NoiseKind>,
    pub seed: u64,
}

impl Default for NoiseAugment {
    fn default() -> Self {
        Self {
            snr_min_db: 10.0,
            snr_max_db: 80.0,
            kinds: NoiseKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl NoiseAugment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.snr_min_db && self.snr_min_db <= self.snr_max_db && self.snr_max_db <= 100.0) {
            return Err(Error::Validation(format!(
                "SNR range [{}, {}] must satisfy 0 <= min <= max <= 100",
                self.snr_min_db, self.snr_max_db
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::Validation("no noise kinds configured".into()));
        }
        Ok(())
    }

    /// One noisy copy per utterance, with kind and SNR drawn from the seeded
    /// stream. Copies get an id suffix naming the condition.
    pub fn augment(&self, utts: &[Utterance]) -> Result<Vec<Utterance>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0xA0A0));
        utts.iter()
            .map(|u| {
                let kind = self.kinds[rng.gen_range(0..self.kinds.len())];
                let snr = if self.snr_max_db > self.snr_min_db {
                    rng.gen_range(self.snr_min_db..self.snr_max_db)
                } else {
                    self.snr_min_db
                };
                let mut noisy = mix_noise(u, kind, snr)?;
                noisy.id = format!("{}+{:?}@{:.1}dB", u.id, kind, snr);
                Ok(noisy)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(samples: Vec<f32>) -> Utterance {
        Utterance {
            id: "u".into(),
            samples,
            transcription: vec![],
            frame_labels: None,
            tv_truth: None,
        }
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_scale() {
        let raw = noise_signal(NoiseKind::White, 4000, 9);
        let clean: Vec<f32> = raw.iter().map(|&x| x as f32).collect();
        // the clean signal is the f32 copy of the noise itself
        let mix = mix_components(&clean, NoiseKind::White, 0.0, 9).unwrap();
        assert!((mix.scale - 1.0).abs() < 1e-6, "scale {}", mix.scale);
    }

    #[test]
    fn snr_is_exact_on_components() {
        let clean: Vec<f32> = (0..8000).map(|n| (n as f32 * 0.05).sin() * 0.3).collect();
        for kind in NoiseKind::ALL {
            let mix = mix_components(&clean, kind, 10.0, 1).unwrap();
            assert!((measured_snr_db(&mix.clean, &mix.noise) - 10.0).abs() < 0.01);
        }
    }

    #[test]
    fn high_snr_still_adds_noise() {
        let clean: Vec<f32> = (0..8000).map(|n| (n as f32 * 0.05).sin() * 0.3).collect();
        let u = utt(clean.clone());
        let noisy = mix_noise(&u, NoiseKind::White, 80.0).unwrap();
        let dev = noisy
            .samples
            .iter()
            .zip(&clean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(dev > 0.0);
    }

    #[test]
    fn zero_power_rejected() {
        let u = utt(vec![0.0; 100]);
        assert!(matches!(mix_noise(&u, NoiseKind::Hum, 10.0), Err(Error::Degenerate(_))));
        let u = utt(vec![0.1; 100]);
        assert!(mix_noise(&u, NoiseKind::Hum, 120.0).is_err());
        assert!(mix_noise(&u, NoiseKind::Hum, -1.0).is_err());
    }

    #[test]
    fn augment_config_validation() {
        assert!(NoiseAugment::default().validate().is_ok());
        let bad = NoiseAugment {
            snr_min_db: 50.0,
            snr_max_db: 20.0,
            ..NoiseAugment::default()
        };
        assert!(bad.validate().is_err());
    }
}
