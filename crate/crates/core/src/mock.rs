//! Deterministic offline language model.
//!
//! Tokenization: each token is an optional run of leading whitespace
//! followed by either a run of word characters or a single other
//! character. CJK ideographs and kana are one token per character so that
//! Japanese pronouns stay addressable. Trailing whitespace becomes its own
//! token. The first token has no log-probability; token `i` gets
//! `-(1 + (h mod 1000) / 1000)` where `h` is FNV-1a 64 over the seed (8
//! little-endian bytes), the text preceding the token, a 0x1F separator,
//! and the token itself.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::ProviderError;
use crate::lm::{sentence_id, LogprobProvider, SentenceScore};
use crate::numeric::fnv1a64;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xFF00..=0xFFEF)
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '\'') && !is_cjk(c)
}

/// Splits `text` into `(token, (char_start, char_end))` pairs.
pub fn tokenize(text: &str) -> Vec<(String, (usize, usize))> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i < chars.len() {
            if is_word_char(chars[i]) {
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        out.push((chars[start..i].iter().collect(), (start, i)));
    }
    out
}

/// Log-probability the mock assigns to `token` after `prefix`.
pub fn mock_logprob(seed: u64, prefix: &str, token: &str) -> f64 {
    let h = fnv1a64(&[&seed.to_le_bytes(), prefix.as_bytes(), &[0x1f], token.as_bytes()]);
    -(1.0 + (h % 1000) as f64 / 1000.0)
}

#[derive(Debug, Clone)]
pub struct MockLm {
    model_id: String,
    seed: u64,
}

impl MockLm {
    pub const DEFAULT_MODEL_ID: &'static str = "mock";

    pub fn new(seed: u64) -> Self {
        Self::with_model_id(Self::DEFAULT_MODEL_ID, seed)
    }

    pub fn with_model_id(model_id: impl Into<String>, seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn score_text(&self, text: &str) -> SentenceScore {
        let pieces = tokenize(text);
        let mut prefix = String::new();
        let mut tokens = Vec::with_capacity(pieces.len());
        let mut logprobs = Vec::with_capacity(pieces.len());
        let mut offsets = Vec::with_capacity(pieces.len());
        for (i, (token, range)) in pieces.into_iter().enumerate() {
            logprobs.push((i > 0).then(|| mock_logprob(self.seed, &prefix, &token)));
            prefix.push_str(&token);
            tokens.push(token);
            offsets.push(range);
        }
        SentenceScore {
            sentence_id: sentence_id(&self.model_id, text),
            model_id: self.model_id.clone(),
            text: text.to_string(),
            tokens,
            logprobs,
            token_offsets: offsets,
        }
    }
}

impl Default for MockLm {
    fn default() -> Self {
        Self::new(0)
    }
}

impl LogprobProvider for MockLm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ProviderError> {
        Ok(self.score_text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn tokenizes_words_and_punctuation() {
        let toks: Vec<String> = tokenize("The chef cooked for him.").into_iter().map(|t| t.0).collect();
        assert_eq!(toks, vec!["The", " chef", " cooked", " for", " him", "."]);
        let toks: Vec<String> = tokenize("彼女は料理人だ。").into_iter().map(|t| t.0).collect();
        assert_eq!(toks, vec!["彼", "女", "は", "料", "理", "人", "だ", "。"]);
        assert!(tokenize("").is_empty());
        let toks: Vec<String> = tokenize(" a  ").into_iter().map(|t| t.0).collect();
        assert_eq!(toks, vec![" a", "  "]);
    }

    #[test]
    fn mock_scores_are_valid_and_deterministic() {
        let lm = MockLm::new(7);
        let a = lm.score_text("a b");
        a.validate().unwrap();
        assert_eq!(a, lm.score_text("a b"));
        assert_eq!(a.logprobs[0], None);
        let v = a.logprobs[1].unwrap();
        assert!((-2.0..=-1.0).contains(&v));
        assert_ne!(MockLm::new(8).score_text("a b").logprobs, a.logprobs);
    }

    proptest! {
        #[test]
        fn tokens_reconstruct_text(text in "\\PC{0,40}") {
            let pieces = tokenize(&text);
            let joined: String = pieces.iter().map(|p| p.0.as_str()).collect();
            prop_assert_eq!(&joined, &text);
            if !text.is_empty() {
                MockLm::default().score_text(&text).validate().unwrap();
            }
        }
    }
}
