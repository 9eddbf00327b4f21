//! Decoding feature sets with a trained acoustic model and scoring them.

use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::models::AcousticModel;
use crate::corpus::Utterance;
use crate::decode::{acoustic_scores, viterbi_decode, wer, DecodeLexicon, DecodeResult, DecoderConfig, LmConfig, NGramLm, WerReport};
use crate::error::{Error, Result};

/// Transcriptions the trigram LM is estimated from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmTrainSet {
    #[default]
    Train,
    /// The transcriptions of the evaluation task itself.
    TestTranscripts,
}

impl std::str::FromStr for LmTrainSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "test-transcripts" => Ok(Self::TestTranscripts),
            _ => Err(Error::Validation(format!("unknown LM training set `{s}`"))),
        }
    }
}

pub fn train_task_lm(train: &[Utterance], test: &[Utterance], which: LmTrainSet, cfg: LmConfig) -> Result<NGramLm> {
    let src = match which {
        LmTrainSet::Train => train,
        LmTrainSet::TestTranscripts => test,
    };
    let sentences: Vec<Vec<String>> = src.iter().map(|u| u.transcription.clone()).collect();
    NGramLm::train(&sentences, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub ids: Vec<String>,
    pub results: Vec<DecodeResult>,
    pub per_utterance: Vec<WerReport>,
    /// Counts pooled over the set.
    pub total: WerReport,
}

impl Decoding {
    pub fn wer(&self) -> f64 {
        self.total.wer()
    }
}

/// Decodes every utterance of `set` and scores it against its transcription.
pub fn decode_set(
    am: &AcousticModel,
    set: &FeatureSet,
    lexicon: &DecodeLexicon,
    lm: &NGramLm,
    cfg: &DecoderConfig,
) -> Result<Decoding> {
    let posteriors = am.posteriors(set)?;
    let mut out = Decoding {
        ids: set.ids.clone(),
        results: Vec::with_capacity(set.len()),
        per_utterance: Vec::with_capacity(set.len()),
        total: WerReport::default(),
    };
    for (post, reference) in posteriors.iter().zip(&set.transcriptions) {
        let scores = acoustic_scores(post.view(), &am.priors, cfg.posterior_floor)?;
        let result = viterbi_decode(&scores, lexicon, lm, cfg)?;
        let report = wer(reference, &result.words)?;
        out.total.accumulate(&report);
        out.per_utterance.push(report);
        out.results.push(result);
    }
    if out.total.ref_words == 0 {
        return Err(Error::Degenerate("nothing to score".into()));
    }
    Ok(out)
}
