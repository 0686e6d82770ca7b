// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt corruptions for robustness checks.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    /// Delete one non-space character.
    #[serde(rename = "CD")]
    CharacterDeletion,
    /// Insert one filler word at a word boundary.
    #[serde(rename = "WI")]
    WordInsertion,
    /// Replace one character by its OCR look-alike.
    #[serde(rename = "OCR")]
    OcrSubstitution,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [Self::CharacterDeletion, Self::WordInsertion, Self::OcrSubstitution];

    pub fn code(&self) -> &'static str {
        match self {
            Self::CharacterDeletion => "CD",
            Self::WordInsertion => "WI",
            Self::OcrSubstitution => "OCR",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PerturbationKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown perturbation {s:?}; expected CD, WI or OCR")))
    }
}

pub const FILLER_WORDS: [&str; 8] = ["a", "the", "very", "really", "quite", "some", "just", "so"];

pub const OCR_CONFUSIONS: [(char, char); 14] = [
    ('O', '0'),
    ('o', '0'),
    ('l', '1'),
    ('I', '1'),
    ('i', '1'),
    ('S', '5'),
    ('s', '5'),
    ('B', '8'),
    ('Z', '2'),
    ('z', '2'),
    ('E', '3'),
    ('A', '4'),
    ('G', '6'),
    ('g', '9'),
];

pub fn ocr_lookalike(c: char) -> Option<char> {
    OCR_CONFUSIONS.iter().find(|(from, _)| *from == c).map(|&(_, to)| to)
}

pub fn perturb_prompt<R: Rng + ?Sized>(text: &str, kind: PerturbationKind, rng: &mut R) -> Result<String> {
    if text.trim().is_empty() {
        return Err(EvalError::InvalidArgument("cannot perturb an empty prompt".into()));
    }
    let chars: Vec<char> = text.chars().collect();
    match kind {
        PerturbationKind::CharacterDeletion => {
            let candidates: Vec<usize> = (0..chars.len()).filter(|&i| !chars[i].is_whitespace()).collect();
            let &at = candidates.choose(rng).expect("non-blank text has a non-space character");
            Ok(chars.iter().enumerate().filter(|&(i, _)| i != at).map(|(_, c)| c).collect())
        }
        PerturbationKind::WordInsertion => {
            let mut words: Vec<&str> = text.split_whitespace().collect();
            let at = rng.random_range(0..=words.len());
            let filler = FILLER_WORDS.choose(rng).expect("filler list is not empty");
            words.insert(at, filler);
            Ok(words.join(" "))
        }
        PerturbationKind::OcrSubstitution => {
            let candidates: Vec<usize> = (0..chars.len()).filter(|&i| ocr_lookalike(chars[i]).is_some()).collect();
            let Some(&at) = candidates.choose(rng) else {
                return Err(EvalError::InvalidArgument(format!("{text:?} has no OCR-confusable character")));
            };
            let mut out = chars;
            out[at] = ocr_lookalike(out[at]).expect("candidate is confusable");
            Ok(out.into_iter().collect())
        }
    }
}

/// Round trip through another language. No implementation ships here; callers
/// plug in a translation service.
pub trait BackTranslator {
    fn back_translate(&self, text: &str) -> std::result::Result<String, String>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use laekit_core::backbones::labelled_rng;

    #[test]
    fn deletion_removes_one_character() {
        let out = perturb_prompt("orange hair", PerturbationKind::CharacterDeletion, &mut labelled_rng(1, "p")).unwrap();
        assert_eq!(out.chars().count(), 10);
        assert_eq!(out.matches(' ').count(), 1);
    }

    #[test]
    fn insertion_adds_one_filler_word() {
        let out = perturb_prompt("orange hair", PerturbationKind::WordInsertion, &mut labelled_rng(2, "p")).unwrap();
        let words: Vec<&str> = out.split(' ').collect();
        assert_eq!(words.len(), 3);
        assert_eq!(words.iter().filter(|w| FILLER_WORDS.contains(w)).count(), 1);
    }

    #[test]
    fn ocr_swaps_one_lookalike() {
        for seed in 0..8 {
            let out = perturb_prompt("Orange", PerturbationKind::OcrSubstitution, &mut labelled_rng(seed, "p")).unwrap();
            assert!(out == "0range" || out == "Oran9e", "{out}");
        }
        assert!(perturb_prompt("chart", PerturbationKind::OcrSubstitution, &mut labelled_rng(3, "p")).is_err());
    }

    #[test]
    fn empty_prompt_and_unknown_kind_are_rejected() {
        for kind in PerturbationKind::ALL {
            assert!(perturb_prompt("  ", kind, &mut labelled_rng(0, "p")).is_err());
        }
        assert_eq!("wi".parse::<PerturbationKind>().unwrap(), PerturbationKind::WordInsertion);
        assert!("BT".parse::<PerturbationKind>().is_err());
    }
}
