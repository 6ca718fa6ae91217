//! Deterministic word tokenizer shared by every metric.

use serde::{Deserialize, Serialize};

/// An ordered list of lowercase word tokens.
///
/// Invariants: no token is empty and no token contains whitespace. The
/// blessed constructor is [`tokenize`]; [`TokenSequence::from_words`] exists
/// for tests and callers that already hold clean tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Builds a sequence from pre-split words, lowercasing each one.
    ///
    /// Panics if a word is empty or contains whitespace; that is a caller
    /// bug, not a data condition.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let tokens: Vec<String> = words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                assert!(
                    !w.is_empty() && !w.chars().any(char::is_whitespace),
                    "invalid token {w:?}"
                );
                w.to_lowercase()
            })
            .collect();
        TokenSequence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

/// Splits raw text into lowercase word tokens.
///
/// Rules: lowercase everything, split on whitespace, and isolate every
/// non-alphanumeric character as its own token ("clear." becomes "clear"
/// and "."). De-identification placeholders such as "XXXX" lowercase to
/// "xxxx" and pass through as ordinary words. Empty input yields an empty
/// sequence. Identical inputs always yield identical sequences.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_lowercase().collect());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    TokenSequence(tokens)
}
