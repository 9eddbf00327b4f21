//! Language model, decoder and scoring.

pub mod decoder;
pub mod lm;
pub mod report;
pub mod wer;

pub use decoder::{acoustic_scores, viterbi_decode, DecodeLexicon, DecodeResult, DecoderConfig};
pub use lm::{LmConfig, NGramLm};
pub use report::{render_markdown, render_tsv, SystemResult};
pub use wer::{wer, WerReport};
