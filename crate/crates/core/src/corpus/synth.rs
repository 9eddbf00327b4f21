//! Articulatory toy-speech synthesizer.
//!
//! Tract variables follow critically damped second-order trajectories towards
//! per-phone targets. A linear map turns the six TVs into three formant
//! frequencies and bandwidths driving a cascade of Klatt resonators, excited
//! by a pulse train (voicing) and white noise (frication).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::lexicon::{self, PhoneClass, PHONES, STATES_PER_PHONE, TV_COUNT};
use super::{frame_count, HOP, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};

/// Natural frequency of the articulator dynamics, Hz.
const ARTICULATOR_HZ: f64 = 12.0;
const F0_HZ: f64 = 120.0;
const TARGET_RMS: f64 = 0.1;
/// Most words per utterance. Words within an utterance are distinct.
pub const MAX_WORDS_PER_UTT: usize = 3;

/// Per-frame values of the six tract variables (10 ms frame period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvTrajectory {
    pub frames: Vec<[f64; TV_COUNT]>,
}

impl TvTrajectory {
    pub fn new(frames: Vec<[f64; TV_COUNT]>) -> Result<Self> {
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("TV trajectory contains non-finite values".into()));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Values of one tract variable over time.
    pub fn channel(&self, tv: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[tv]).collect()
    }

    /// `max - min` of one tract variable.
    pub fn range(&self, tv: usize) -> f64 {
        let (lo, hi) = self
            .frames
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                (lo.min(f[tv]), hi.max(f[tv]))
            });
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    /// Mono samples at 16 kHz in [-1, 1).
    pub samples: Vec<f32>,
    pub transcription: Vec<String>,
    pub frame_labels: Option<Vec<usize>>,
    pub tv_truth: Option<TvTrajectory>,
}

impl Utterance {
    pub fn frame_count(&self) -> usize {
        frame_count(self.samples.len())
    }

    /// Checks the sample, label and TV invariants.
    pub fn validate(&self, label_count: usize) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Degenerate(format!("utterance {} has no samples", self.id)));
        }
        let frames = self.frame_count();
        if let Some(labels) = &self.frame_labels {
            if labels.len() != frames {
                return Err(Error::Validation(format!(
                    "utterance {}: {} labels for {} frames",
                    self.id,
                    labels.len(),
                    frames
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= label_count) {
                return Err(Error::Validation(format!(
                    "utterance {}: label {bad} outside [0, {label_count})",
                    self.id
                )));
            }
        }
        if let Some(tv) = &self.tv_truth {
            if tv.len() != frames {
                return Err(Error::Validation(format!(
                    "utterance {}: {} TV frames for {} frames",
                    self.id,
                    tv.len(),
                    frames
                )));
            }
        }
        Ok(())
    }
}

/// Articulatory perturbation applied to generate dysarthric-like speech.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DysarthriaProfile {
    /// Temporal stretching of gestures, >= 1.
    pub slowdown: f64,
    /// Fractional reduction of the target range, in [0, 1].
    pub undershoot: f64,
    pub tremor_amp: f64,
    pub tremor_hz: f64,
    pub seed: u64,
}

impl Default for DysarthriaProfile {
    fn default() -> Self {
        Self {
            slowdown: 1.4,
            undershoot: 0.4,
            tremor_amp: 0.08,
            tremor_hz: 5.0,
            seed: 0,
        }
    }
}

impl DysarthriaProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.slowdown.is_finite() && self.slowdown >= 1.0) {
            return Err(Error::Validation(format!("slowdown {} must be >= 1", self.slowdown)));
        }
        if !(0.0..=1.0).contains(&self.undershoot) {
            return Err(Error::Validation(format!(
                "undershoot {} must lie in [0, 1]",
                self.undershoot
            )));
        }
        if !(self.tremor_amp.is_finite() && self.tremor_amp >= 0.0) {
            return Err(Error::Validation(format!("tremor_amp {} must be >= 0", self.tremor_amp)));
        }
        if !(self.tremor_hz.is_finite() && self.tremor_hz > 0.0) {
            return Err(Error::Validation(format!("tremor_hz {} must be > 0", self.tremor_hz)));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, utt: u64, kind: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, utt), kind))
}

/// Linear articulatory-to-acoustic map: `[F1, F2, F3, B1, B2, B3]` in Hz.
pub fn formants_from_tvs(tv: &[f64; TV_COUNT]) -> [f64; 6] {
    let [la, lp, tbcl, tbcd, ttcl, ttcd] = *tv;
    let raw = [
        500.0 + 250.0 * la + 150.0 * tbcd,
        1500.0 - 500.0 * tbcl - 200.0 * lp + 100.0 * ttcl,
        2600.0 - 300.0 * ttcl + 200.0 * ttcd - 150.0 * lp,
        100.0 + 40.0 * lp + 30.0 * tbcd,
        120.0 + 50.0 * ttcd - 30.0 * tbcl,
        180.0 + 60.0 * ttcl + 40.0 * la,
    ];
    [
        raw[0].clamp(90.0, 7500.0),
        raw[1].clamp(90.0, 7500.0),
        raw[2].clamp(90.0, 7500.0),
        raw[3].clamp(30.0, 500.0),
        raw[4].clamp(30.0, 500.0),
        raw[5].clamp(30.0, 500.0),
    ]
}

/// Klatt two-pole resonator with unit DC gain.
#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let fs = SAMPLE_RATE as f64;
        let r = (-PI * bw / fs).exp();
        let c = -r * r;
        let b = 2.0 * r * (2.0 * PI * freq / fs).cos();
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct StateSegment {
    label: usize,
    phone: usize,
    state: usize,
    start_frame: usize,
    end_frame: usize,
}

/// First sample governed by frame `f`: halfway between consecutive frame centres.
fn segment_start_sample(frame: usize) -> usize {
    if frame == 0 {
        0
    } else {
        frame * HOP + WINDOW / 2 - HOP / 2
    }
}

fn frame_center(frame: usize) -> usize {
    frame * HOP + WINDOW / 2
}

fn synthesize_utterance(
    id: String,
    words: Vec<String>,
    profile: Option<&DysarthriaProfile>,
    seed: u64,
    utt_index: u64,
) -> Result<Utterance> {
    let slowdown = profile.map_or(1.0, |p| p.slowdown);
    let scale = profile.map_or(1.0, |p| 1.0 - p.undershoot);

    let mut phones = Vec::new();
    for w in &words {
        phones.extend(lexicon::pronounce(w)?);
    }

    // State segmentation; boundaries are stretched cumulatively so that the
    // total duration tracks slowdown * normal duration within one frame.
    let mut segments = Vec::new();
    let mut cum_normal = 0usize;
    let mut prev_end = 0usize;
    for &p in &phones {
        for s in 0..STATES_PER_PHONE {
            cum_normal += PHONES[p].state_frames;
            let end = (cum_normal as f64 * slowdown).round() as usize;
            segments.push(StateSegment {
                label: p * STATES_PER_PHONE + s,
                phone: p,
                state: s,
                start_frame: prev_end,
                end_frame: end,
            });
            prev_end = end;
        }
    }
    let n_frames = prev_end;
    let n_samples = WINDOW + (n_frames - 1) * HOP;

    let mut frame_labels = vec![0usize; n_frames];
    for seg in &segments {
        for l in &mut frame_labels[seg.start_frame..seg.end_frame] {
            *l = seg.label;
        }
    }

    // Per-sample segment index.
    let mut seg_of_sample = vec![0usize; n_samples];
    for (i, seg) in segments.iter().enumerate() {
        let start = segment_start_sample(seg.start_frame);
        let end = if seg.end_frame >= n_frames {
            n_samples
        } else {
            segment_start_sample(seg.end_frame)
        };
        for s in &mut seg_of_sample[start..end] {
            *s = i;
        }
    }

    let fs = SAMPLE_RATE as f64;
    let dt = 1.0 / fs;
    let omega = 2.0 * PI * ARTICULATOR_HZ / slowdown;
    let decay = (-omega * dt).exp();

    let target = |seg: usize| -> [f64; TV_COUNT] {
        let mut t = PHONES[segments[seg].phone].targets;
        for v in &mut t {
            *v *= scale;
        }
        t
    };

    let mut tremor_rng = stream(seed, utt_index, 3);
    let tremor_phase: [f64; TV_COUNT] =
        std::array::from_fn(|_| tremor_rng.gen::<f64>() * 2.0 * PI);

    let mut pos = target(0);
    let mut vel = [0.0f64; TV_COUNT];
    let mut tv_samples: Vec<[f64; TV_COUNT]> = Vec::with_capacity(n_samples);
    for (n, &seg) in seg_of_sample.iter().enumerate() {
        let tgt = target(seg);
        let mut out = [0.0; TV_COUNT];
        for k in 0..TV_COUNT {
            let e = pos[k] - tgt[k];
            let c = vel[k] + omega * e;
            pos[k] = tgt[k] + (e + c * dt) * decay;
            vel[k] = (vel[k] - omega * c * dt) * decay;
            out[k] = pos[k];
        }
        if let Some(p) = profile {
            if p.tremor_amp > 0.0 {
                let t = n as f64 * dt;
                for k in 0..TV_COUNT {
                    out[k] += p.tremor_amp * (2.0 * PI * p.tremor_hz * t + tremor_phase[k]).sin();
                }
            }
        }
        tv_samples.push(out);
    }

    let tv_frames: Vec<[f64; TV_COUNT]> =
        (0..n_frames).map(|f| tv_samples[frame_center(f)]).collect();

    // Source-filter synthesis.
    let mut noise_rng = stream(seed, utt_index, 2);
    let smooth = (-1.0 / (0.004 * fs)).exp();
    let (mut voicing, mut frication, mut gain) = (0.0, 0.0, 0.0);
    let mut phase = 0.0f64;
    let mut glottal = 0.0f64;
    let mut res = [Resonator::default(); 3];
    let duration = n_samples as f64 * dt;
    let mut audio = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let seg = &segments[seg_of_sample[n]];
        let phone = &PHONES[seg.phone];
        let (v_t, f_t, mut g_t) = phone.excitation();
        if seg.state == 0
            && matches!(phone.class, PhoneClass::VoicedStop | PhoneClass::VoicelessStop)
        {
            g_t *= 0.15; // closure
        }
        voicing = smooth * voicing + (1.0 - smooth) * v_t;
        frication = smooth * frication + (1.0 - smooth) * f_t;
        gain = smooth * gain + (1.0 - smooth) * g_t;

        let t = n as f64 * dt;
        let f0 = F0_HZ * (1.0 - 0.1 * t / duration);
        phase += f0 * dt;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        glottal = 0.92 * glottal + pulse;
        let noise: f64 = noise_rng.sample(StandardNormal);
        let excitation = gain * (voicing * glottal * 0.3 + frication * noise * 0.4);

        let fm = formants_from_tvs(&tv_samples[n]);
        let mut y = excitation;
        for (i, r) in res.iter_mut().enumerate() {
            y = r.step(y, fm[i], fm[i + 3]);
        }
        audio.push(y);
    }

    let rms = (audio.iter().map(|x| x * x).sum::<f64>() / n_samples as f64).sqrt();
    let norm = if rms > 0.0 { TARGET_RMS / rms } else { 1.0 };
    let samples: Vec<f32> = audio
        .iter()
        .map(|&x| ((x * norm).clamp(-1.0, 1.0 - 1.0 / 32768.0)) as f32)
        .collect();

    debug_assert_eq!(frame_count(samples.len()), n_frames);
    Ok(Utterance {
        id,
        samples,
        transcription: words,
        frame_labels: Some(frame_labels),
        tv_truth: Some(TvTrajectory { frames: tv_frames }),
    })
}

/// Synthesizes `n_utts` utterances of 1..=3 distinct words drawn from `vocab`.
///
/// Word choice depends only on `seed` and the utterance index, so the same
/// seed with and without a profile yields the same transcriptions.
pub fn generate_corpus(
    n_utts: usize,
    vocab: &[String],
    profile: Option<&DysarthriaProfile>,
    seed: u64,
) -> Result<Vec<Utterance>> {
    if vocab.is_empty() {
        return Err(Error::Validation("vocabulary is empty".into()));
    }
    if n_utts == 0 {
        return Err(Error::Validation("n_utts must be >= 1".into()));
    }
    for w in vocab {
        lexicon::pronounce(w)?;
    }
    if let Some(p) = profile {
        p.validate()?;
    }
    let tag = if profile.is_some() { "dys" } else { "nor" };
    (0..n_utts)
        .map(|i| {
            let mut rng = stream(seed, i as u64, 1);
            let max_words = MAX_WORDS_PER_UTT.min(vocab.len());
            let k = rng.gen_range(1..=max_words);
            let words: Vec<String> = index::sample(&mut rng, vocab.len(), k)
                .into_iter()
                .map(|j| vocab[j].clone())
                .collect();
            let id = format!("{tag}-s{seed}-{i:05}");
            synthesize_utterance(id, words, profile, seed, i as u64)
        })
        .collect()
}
