//! Token-passing Viterbi decoding over word HMMs with scaled likelihoods.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::lm::NGramLm;
use crate::corpus::lexicon::word_states;
use crate::error::{Error, Result};

/// Word models: one left-to-right HMM state per entry of `states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeLexicon {
    pub words: Vec<String>,
    pub states: Vec<Vec<usize>>,
}

impl DecodeLexicon {
    /// Lexicon over `vocab` with 3 states per phone of the toy inventory.
    pub fn from_vocab(vocab: &[String]) -> Result<Self> {
        let mut words = vocab.to_vec();
        words.sort();
        words.dedup();
        let states = words.iter().map(|w| word_states(w)).collect::<Result<_>>()?;
        Ok(Self { words, states })
    }

    pub fn validate(&self, n_labels: usize) -> Result<()> {
        if self.words.is_empty() {
            return Err(Error::Validation("empty decoding lexicon".into()));
        }
        if self.words.len() != self.states.len() {
            return Err(Error::Validation("lexicon words and state lists differ in length".into()));
        }
        for (w, s) in self.words.iter().zip(&self.states) {
            if s.is_empty() {
                return Err(Error::Validation(format!("word `{w}` has no states")));
            }
            if let Some(bad) = s.iter().find(|&&l| l >= n_labels) {
                return Err(Error::Validation(format!("word `{w}` uses label {bad} >= {n_labels}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub self_loop: f64,
    pub lm_weight: f64,
    /// Tokens scoring below `best - beam` are pruned each frame. An
    /// infinite beam is written as `null` in JSON.
    #[serde(with = "beam_json")]
    pub beam: f64,
    pub posterior_floor: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            self_loop: 0.6,
            lm_weight: 1.0,
            beam: f64::INFINITY,
            posterior_floor: 1e-30,
        }
    }
}

mod beam_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beam: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beam.is_finite() {
            s.serialize_f64(*beam)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub words: Vec<String>,
    /// Frame label of the best path, one per frame.
    pub state_path: Vec<usize>,
    pub score: f64,
}

/// Log scaled likelihood `ln(max(p, floor) / prior)`.
pub fn acoustic_scores(posteriors: ArrayView2<f32>, priors: &[f64], floor: f64) -> Result<Vec<Vec<f64>>> {
    if posteriors.ncols() != priors.len() {
        return Err(Error::Geometry(format!(
            "{} posterior columns but {} priors",
            posteriors.ncols(),
            priors.len()
        )));
    }
    if let Some(i) = priors.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Validation(format!("prior of state {i} is not positive")));
    }
    let log_prior: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    Ok(posteriors
        .outer_iter()
        .map(|row| {
            row.iter()
                .zip(&log_prior)
                .map(|(&p, lp)| (p as f64).max(floor).ln() - lp)
                .collect()
        })
        .collect())
}

/// Search space: token `(u, v, j)` is in position `j` of word `v` whose
/// predecessor is `u` (`u == n_words` for sentence start).
struct Space {
    n_words: usize,
    offsets: Vec<usize>,
    per_ctx: usize,
}

impl Space {
    fn new(lex: &DecodeLexicon) -> Self {
        let mut offsets = Vec::with_capacity(lex.words.len());
        let mut acc = 0;
        for s in &lex.states {
            offsets.push(acc);
            acc += s.len();
        }
        Self {
            n_words: lex.words.len(),
            offsets,
            per_ctx: acc,
        }
    }

    fn len(&self) -> usize {
        (self.n_words + 1) * self.per_ctx
    }

    fn index(&self, u: usize, v: usize, j: usize) -> usize {
        u * self.per_ctx + self.offsets[v] + j
    }

    fn decode_index(&self, idx: usize) -> (usize, usize, usize) {
        let u = idx / self.per_ctx;
        let r = idx % self.per_ctx;
        let v = self.offsets.partition_point(|&o| o <= r) - 1;
        (u, v, r - self.offsets[v])
    }
}

/// Best word sequence for the per-frame log acoustic scores `ac` (frames x labels).
pub fn viterbi_decode(
    ac: &[Vec<f64>],
    lex: &DecodeLexicon,
    lm: &NGramLm,
    cfg: &DecoderConfig,
) -> Result<DecodeResult> {
    let n_labels = ac.first().map_or(0, Vec::len);
    lex.validate(n_labels)?;
    if ac.is_empty() {
        return Err(Error::Degenerate("no frames to decode".into()));
    }
    let space = Space::new(lex);
    let nw = space.n_words;
    let lm_ids: Vec<usize> = lex.words.iter().map(|w| lm.id(w)).collect();
    let lm_ctx = |u: usize| if u == nw { lm.bos() } else { lm_ids[u] };
    let lm_score = |u: usize, v: usize, w: usize| cfg.lm_weight * lm.prob_ids(lm_ctx(u), lm_ctx(v), w).ln();
    let (ln_loop, ln_next) = (cfg.self_loop.ln(), (1.0 - cfg.self_loop).ln());
    let neg = f64::NEG_INFINITY;

    let n = space.len();
    let mut score = vec![neg; n];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(ac.len());
    for v in 0..nw {
        let i = space.index(nw, v, 0);
        score[i] = lm_score(nw, nw, lm_ids[v]) + ac[0][lex.states[v][0]];
    }
    back.push(vec![u32::MAX; n]);

    let mut next = vec![neg; n];
    for frame in &ac[1..] {
        let best = score.iter().copied().fold(neg, f64::max);
        let cutoff = best - cfg.beam;
        next.fill(neg);
        let mut bp = vec![u32::MAX; n];
        let relax = |next: &mut [f64], bp: &mut [u32], to: usize, s: f64, from: usize| {
            if s > next[to] {
                next[to] = s;
                bp[to] = from as u32;
            }
        };
        for (i, &s) in score.iter().enumerate() {
            if s == neg || s < cutoff {
                continue;
            }
            let (u, v, j) = space.decode_index(i);
            relax(&mut next, &mut bp, i, s + ln_loop, i);
            let len = lex.states[v].len();
            if j + 1 < len {
                relax(&mut next, &mut bp, i + 1, s + ln_next, i);
            } else {
                for w in 0..nw {
                    let t = s + ln_next + lm_score(u, v, lm_ids[w]);
                    relax(&mut next, &mut bp, space.index(v, w, 0), t, i);
                }
            }
        }
        for (i, s) in next.iter_mut().enumerate() {
            if *s > neg {
                let (_, v, j) = space.decode_index(i);
                *s += frame[lex.states[v][j]];
            }
        }
        std::mem::swap(&mut score, &mut next);
        back.push(bp);
    }

    let mut best = (neg, usize::MAX);
    for u in 0..=nw {
        for v in 0..nw {
            let i = space.index(u, v, lex.states[v].len() - 1);
            if score[i] == neg {
                continue;
            }
            let s = score[i] + cfg.lm_weight * lm.prob_ids(lm_ctx(u), lm_ids[v], lm.eos()).ln();
            if s > best.0 {
                best = (s, i);
            }
        }
    }
    if best.1 == usize::MAX {
        return Err(Error::Degenerate(format!(
            "no complete word sequence fits {} frames",
            ac.len()
        )));
    }

    let mut path = vec![0usize; ac.len()];
    let mut idx = best.1;
    let mut words = Vec::new();
    for t in (0..ac.len()).rev() {
        let (_, v, j) = space.decode_index(idx);
        path[t] = lex.states[v][j];
        let prev = back[t][idx];
        let entered = j == 0 && (prev == u32::MAX || prev as usize != idx);
        if entered {
            words.push(lex.words[v].clone());
        }
        idx = prev as usize;
    }
    words.reverse();
    Ok(DecodeResult {
        words,
        state_path: path,
        score: best.0,
    })
}
