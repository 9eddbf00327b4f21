//! Speaker-independent recognition of dysarthric speech at desk scale.
//!
//! The crate bundles a toy articulatory speech synthesizer, auditory
//! front-ends (log-mel, log-gammatone, modulation features), a small
//! deterministic neural-network kernel with fully connected, frequency- and
//! time-convolution and fusion layers, speech inversion to tract variables,
//! bottleneck and adaptation pipelines, and a Viterbi decode / WER harness.

pub mod architectures;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod frontend;
pub mod inversion;
pub mod nn;
pub mod pipelines;

pub use error::{Error, Result};
