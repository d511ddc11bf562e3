//! Token conditioning: a fixed toy vocabulary of shape and color words.

use serde::{Deserialize, Serialize};

/// Index 0 is the null token used for empty prompts.
pub const VOCAB: &[&str] = &[
    "<empty>", "circle", "square", "triangle", "red", "green", "blue", "yellow", "cyan", "magenta", "orange",
    "purple", "white", "black", "gray", "pink", "brown",
];

pub fn vocab_size() -> usize {
    VOCAB.len()
}

/// Token ids for one prompt. Never empty: an empty prompt maps to `[0]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCondition {
    ids: Vec<usize>,
}

impl TokenCondition {
    pub fn empty() -> Self {
        Self { ids: vec![0] }
    }

    /// Known words become tokens; unknown words are dropped.
    pub fn from_prompt(prompt: &str) -> Self {
        let ids: Vec<usize> = prompt
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .filter_map(|w| {
                let w = w.to_lowercase();
                VOCAB.iter().skip(1).position(|v| *v == w).map(|p| p + 1)
            })
            .collect();
        if ids.is_empty() {
            Self::empty()
        } else {
            Self { ids }
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn is_empty_prompt(&self) -> bool {
        self.ids == [0]
    }
}
