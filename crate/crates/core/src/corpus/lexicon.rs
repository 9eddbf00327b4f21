//! Toy phone inventory and pronunciation lexicon.
//!
//! Thirteen phones (eight consonants, five vowels), each modelled with three
//! left-to-right states. Frame label of state `s` of phone `p` is `3 * p + s`.
//!
//! | phone | class           | LA   | LP   | TBCL | TBCD | TTCL | TTCD |
//! |-------|-----------------|------|------|------|------|------|------|
//! | b     | voiced stop     | -0.9 |  0.0 |  0.0 |  0.3 |  0.0 |  0.6 |
//! | d     | voiced stop     |  0.3 | -0.1 | -0.2 |  0.3 | -0.7 | -0.9 |
//! | g     | voiced stop     |  0.3 |  0.0 |  0.8 | -0.9 |  0.2 |  0.5 |
//! | p     | voiceless stop  | -0.9 |  0.1 |  0.0 |  0.3 |  0.0 |  0.6 |
//! | t     | voiceless stop  |  0.3 | -0.2 | -0.2 |  0.3 | -0.7 | -0.9 |
//! | k     | voiceless stop  |  0.3 |  0.1 |  0.8 | -0.9 |  0.2 |  0.5 |
//! | s     | fricative       |  0.3 | -0.3 | -0.3 |  0.2 | -0.6 | -0.6 |
//! | m     | nasal           | -0.9 |  0.2 |  0.1 |  0.2 |  0.1 |  0.6 |
//! | a     | vowel           |  0.8 | -0.3 |  0.6 |  0.7 |  0.0 |  0.8 |
//! | e     | vowel           |  0.5 | -0.4 | -0.4 |  0.0 | -0.1 |  0.5 |
//! | i     | vowel           |  0.2 | -0.6 | -0.8 | -0.6 | -0.2 |  0.2 |
//! | o     | vowel           |  0.1 |  0.6 |  0.7 |  0.1 |  0.2 |  0.7 |
//! | u     | vowel           | -0.2 |  0.9 |  0.9 | -0.5 |  0.3 |  0.6 |

use crate::error::{Error, Result};

pub const STATES_PER_PHONE: usize = 3;
pub const TV_COUNT: usize = 6;

/// Names of the six tract variables, in storage order.
pub const TV_NAMES: [&str; TV_COUNT] = ["LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneClass {
    VoicedStop,
    VoicelessStop,
    Fricative,
    Nasal,
    Vowel,
}

#[derive(Debug, Clone, Copy)]
pub struct Phone {
    pub symbol: char,
    pub class: PhoneClass,
    /// Articulatory targets in normalized TV units.
    pub targets: [f64; TV_COUNT],
    /// Normal-speech duration of each state, in frames.
    pub state_frames: usize,
}

impl Phone {
    /// (voicing, frication, gain) excitation controls.
    pub fn excitation(&self) -> (f64, f64, f64) {
        match self.class {
            PhoneClass::VoicedStop => (0.8, 0.15, 0.35),
            PhoneClass::VoicelessStop => (0.0, 0.9, 0.3),
            PhoneClass::Fricative => (0.0, 1.0, 0.6),
            PhoneClass::Nasal => (1.0, 0.0, 0.6),
            PhoneClass::Vowel => (1.0, 0.05, 1.0),
        }
    }
}

const fn phone(symbol: char, class: PhoneClass, targets: [f64; TV_COUNT]) -> Phone {
    let state_frames = match class {
        PhoneClass::Vowel => 3,
        _ => 2,
    };
    Phone {
        symbol,
        class,
        targets,
        state_frames,
    }
}

pub const PHONES: [Phone; 13] = [
    phone('b', PhoneClass::VoicedStop, [-0.9, 0.0, 0.0, 0.3, 0.0, 0.6]),
    phone('d', PhoneClass::VoicedStop, [0.3, -0.1, -0.2, 0.3, -0.7, -0.9]),
    phone('g', PhoneClass::VoicedStop, [0.3, 0.0, 0.8, -0.9, 0.2, 0.5]),
    phone('p', PhoneClass::VoicelessStop, [-0.9, 0.1, 0.0, 0.3, 0.0, 0.6]),
    phone('t', PhoneClass::VoicelessStop, [0.3, -0.2, -0.2, 0.3, -0.7, -0.9]),
    phone('k', PhoneClass::VoicelessStop, [0.3, 0.1, 0.8, -0.9, 0.2, 0.5]),
    phone('s', PhoneClass::Fricative, [0.3, -0.3, -0.3, 0.2, -0.6, -0.6]),
    phone('m', PhoneClass::Nasal, [-0.9, 0.2, 0.1, 0.2, 0.1, 0.6]),
    phone('a', PhoneClass::Vowel, [0.8, -0.3, 0.6, 0.7, 0.0, 0.8]),
    phone('e', PhoneClass::Vowel, [0.5, -0.4, -0.4, 0.0, -0.1, 0.5]),
    phone('i', PhoneClass::Vowel, [0.2, -0.6, -0.8, -0.6, -0.2, 0.2]),
    phone('o', PhoneClass::Vowel, [0.1, 0.6, 0.7, 0.1, 0.2, 0.7]),
    phone('u', PhoneClass::Vowel, [-0.2, 0.9, 0.9, -0.5, 0.3, 0.6]),
];

/// Words of the built-in lexicon. Each letter is one phone.
pub const WORDS: [&str; 24] = [
    "ba", "bi", "bo", "da", "de", "du", "ga", "go", "pa", "pi", "ta", "to", "ka", "ke", "ku",
    "sa", "si", "so", "ma", "mi", "mu", "abe", "edu", "ogi",
];

/// Number of distinct frame labels (phone states).
pub fn label_count() -> usize {
    PHONES.len() * STATES_PER_PHONE
}

/// Ordered phone-state names, e.g. `b_0`, `b_1`, `b_2`, `d_0`, ...
pub fn label_inventory() -> Vec<String> {
    PHONES
        .iter()
        .flat_map(|p| (0..STATES_PER_PHONE).map(move |s| format!("{}_{}", p.symbol, s)))
        .collect()
}

pub fn phone_index(symbol: char) -> Option<usize> {
    PHONES.iter().position(|p| p.symbol == symbol)
}

/// Phone indices of a lexicon word.
pub fn pronounce(word: &str) -> Result<Vec<usize>> {
    if !WORDS.contains(&word) {
        return Err(Error::UnknownWord(word.to_string()));
    }
    word.chars()
        .map(|c| phone_index(c).ok_or_else(|| Error::UnknownWord(word.to_string())))
        .collect()
}

/// Frame-label sequence (one entry per HMM state) of a lexicon word.
pub fn word_states(word: &str) -> Result<Vec<usize>> {
    Ok(pronounce(word)?
        .into_iter()
        .flat_map(|p| (0..STATES_PER_PHONE).map(move |s| p * STATES_PER_PHONE + s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_is_39_states() {
        assert_eq!(label_count(), 39);
        let inv = label_inventory();
        assert_eq!(inv.len(), 39);
        assert_eq!(inv[0], "b_0");
        assert_eq!(inv[38], "u_2");
    }

    #[test]
    fn all_words_pronounceable() {
        for w in WORDS {
            assert_eq!(pronounce(w).unwrap().len(), w.len());
        }
        assert_eq!(word_states("ba").unwrap(), vec![0, 1, 2, 24, 25, 26]);
    }

    #[test]
    fn unknown_word_rejected() {
        assert!(matches!(pronounce("zz"), Err(Error::UnknownWord(w)) if w == "zz"));
        // letters are valid phones but the word is not listed
        assert!(pronounce("bab").is_err());
    }
}
