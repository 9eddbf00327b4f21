//! Interpolated add-k trigram language model.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub k: f64,
    /// Interpolation weights for the trigram, bigram and unigram estimates.
    pub weights: [f64; 3],
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            k: 0.1,
            weights: [0.6, 0.3, 0.1],
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if !(self.k > 0.0) || self.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(
                "LM needs k > 0 and non-negative weights summing to 1".into(),
            ));
        }
        Ok(())
    }
}

/// Word ids: `0..vocab.len()` are predictable tokens (words, `</s>`, `<unk>`);
/// `vocab.len()` is the `<s>` context id.
fn count<K: std::hash::Hash + Eq>(m: &HashMap<K, f64>, key: K) -> f64 {
    m.get(&key).copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    pub config: LmConfig,
    pub vocab: Vec<String>,
    uni: Vec<f64>,
    total: f64,
    bi: HashMap<(usize, usize), f64>,
    bi_ctx: HashMap<usize, f64>,
    tri: HashMap<(usize, usize, usize), f64>,
    tri_ctx: HashMap<(usize, usize), f64>,
}

impl NGramLm {
    pub fn train(sentences: &[Vec<String>], config: LmConfig) -> Result<Self> {
        config.validate()?;
        if sentences.iter().all(|s| s.is_empty()) {
            return Err(Error::Degenerate("LM training corpus is empty".into()));
        }
        let mut words: Vec<String> = sentences.iter().flatten().cloned().collect();
        words.extend([EOS.to_string(), UNK.to_string()]);
        words.sort();
        words.dedup();
        if words.iter().any(|w| w == BOS) {
            return Err(Error::Validation(format!("{BOS} may not appear inside a sentence")));
        }
        let mut lm = Self {
            config,
            uni: vec![0.0; words.len()],
            vocab: words,
            total: 0.0,
            bi: HashMap::new(),
            bi_ctx: HashMap::new(),
            tri: HashMap::new(),
            tri_ctx: HashMap::new(),
        };
        let bos = lm.bos();
        for s in sentences {
            let mut ids = vec![bos, bos];
            ids.extend(s.iter().map(|w| lm.id(w)));
            ids.push(lm.id(EOS));
            for i in 2..ids.len() {
                let (u, v, w) = (ids[i - 2], ids[i - 1], ids[i]);
                lm.uni[w] += 1.0;
                lm.total += 1.0;
                *lm.bi.entry((v, w)).or_default() += 1.0;
                *lm.bi_ctx.entry(v).or_default() += 1.0;
                *lm.tri.entry((u, v, w)).or_default() += 1.0;
                *lm.tri_ctx.entry((u, v)).or_default() += 1.0;
            }
        }
        Ok(lm)
    }

    /// Number of predictable tokens `V`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn bos(&self) -> usize {
        self.vocab.len()
    }

    pub fn eos(&self) -> usize {
        self.id(EOS)
    }

    /// Id of `word`; out-of-vocabulary words map to `<unk>`.
    pub fn id(&self, word: &str) -> usize {
        if word == BOS {
            return self.bos();
        }
        self.vocab
            .binary_search_by(|w| w.as_str().cmp(word))
            .or_else(|_| self.vocab.binary_search_by(|w| w.as_str().cmp(UNK)))
            .expect("<unk> is always in the vocabulary")
    }

    /// `P(w | u, v)` over ids.
    pub fn prob_ids(&self, u: usize, v: usize, w: usize) -> f64 {
        let k = self.config.k;
        let kv = k * self.vocab_size() as f64;
        let p3 = (count(&self.tri, (u, v, w)) + k) / (count(&self.tri_ctx, (u, v)) + kv);
        let p2 = (count(&self.bi, (v, w)) + k) / (count(&self.bi_ctx, v) + kv);
        let p1 = (self.uni[w] + k) / (self.total + kv);
        let [a, b, g] = self.config.weights;
        a * p3 + b * p2 + g * p1
    }

    /// `P(word | history)`; only the last two history words matter and
    /// missing history is padded with `<s>`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let n = history.len();
        let at = |i: usize| if i < n { self.id(history[i]) } else { self.bos() };
        let u = if n >= 2 { at(n - 2) } else { self.bos() };
        let v = if n >= 1 { at(n - 1) } else { self.bos() };
        self.prob_ids(u, v, self.id(word))
    }

    /// Per-token perplexity, counting `</s>` as a token.
    pub fn perplexity(&self, sentences: &[Vec<String>]) -> Result<f64> {
        let (mut logp, mut n) = (0.0, 0usize);
        for s in sentences {
            let (mut u, mut v) = (self.bos(), self.bos());
            for w in s.iter().map(|w| self.id(w)).chain([self.eos()]) {
                logp += self.prob_ids(u, v, w).ln();
                n += 1;
                (u, v) = (v, w);
            }
        }
        if n == 0 {
            return Err(Error::Degenerate("no sentences to score".into()));
        }
        Ok((-logp / n as f64).exp())
    }

    /// Counts rendered deterministically, for checksums in reports.
    pub fn summary(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("vocab", self.vocab_size()),
            ("bigrams", self.bi.len()),
            ("trigrams", self.tri.len()),
        ])
    }
}
