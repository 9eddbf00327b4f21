//! Toy speech corpus: synthesis, noise mixing, file I/O and splits.

pub mod io;
pub mod lexicon;
pub mod noise;
pub mod split;
pub mod synth;

pub use io::{load_manifest, load_utterances, read_wav, write_corpus, Manifest, ManifestEntry};
pub use noise::{mix_noise, NoiseAugment, NoiseKind};
pub use split::{split_corpus, DEFAULT_SPLIT};
pub use synth::{generate_corpus, DysarthriaProfile, TvTrajectory, Utterance};

pub const SAMPLE_RATE: usize = 16_000;
/// Analysis window, 25 ms.
pub const WINDOW: usize = 400;
/// Frame shift, 10 ms.
pub const HOP: usize = 160;

/// Frames produced by the 25 ms / 10 ms framing policy.
pub fn frame_count(n_samples: usize) -> usize {
    if n_samples < WINDOW {
        0
    } else {
        1 + (n_samples - WINDOW) / HOP
    }
}
