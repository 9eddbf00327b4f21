//! Word error rate by unit-cost Levenshtein alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `100 (S + D + I) / N`.
    pub fn wer(&self) -> f64 {
        100.0 * self.errors() as f64 / self.ref_words as f64
    }

    /// Pools counts over utterances (corpus-level WER).
    pub fn accumulate(&mut self, other: &WerReport) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_words += other.ref_words;
    }
}

pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(Error::Validation("WER needs a non-empty reference".into()));
    }
    let (n, m) = (reference.len(), hypothesis.len());
    // d[i][j]: cost of aligning ref[..i] with hyp[..j]
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i][j] = (d[i - 1][j - 1] + sub).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut r = WerReport {
        ref_words: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                r.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            r.deletions += 1;
            i -= 1;
        } else {
            r.insertions += 1;
            j -= 1;
        }
    }
    Ok(r)
}
