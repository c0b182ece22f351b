//! Per-token log-probabilities and the probabilities derived from them.
//!
//! All log-probabilities are natural logs. Token offsets are character
//! (Unicode scalar value) indices into the sentence text, half-open.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::numeric::{fnv1a64, CompensatedSum};

/// Stable identifier of a (model, sentence) pair: FNV-1a 64 over
/// `model_id`, a NUL byte, and the text, as 16 lowercase hex digits.
pub fn sentence_id(model_id: &str, text: &str) -> String {
    format!("{:016x}", fnv1a64(&[model_id.as_bytes(), &[0u8], text.as_bytes()]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence_id: String,
    pub model_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    /// `logprobs[i] = ln P(token_i | tokens_<i)`; the first entry may be `None`.
    pub logprobs: Vec<Option<f64>>,
    pub token_offsets: Vec<(usize, usize)>,
}

impl SentenceScore {
    /// Checks the record invariants: equal lengths, finite non-positive
    /// log-probabilities (only the first may be absent), contiguous offsets
    /// covering the whole text, and tokens that concatenate back to it.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("sentence {:?}: {msg}", self.text)));
        if self.tokens.is_empty() {
            return fail("no tokens".to_string());
        }
        if self.tokens.len() != self.logprobs.len() {
            return fail(format!(
                "{} tokens but {} logprobs",
                self.tokens.len(),
                self.logprobs.len()
            ));
        }
        if self.tokens.len() != self.token_offsets.len() {
            return fail(format!(
                "{} tokens but {} offsets",
                self.tokens.len(),
                self.token_offsets.len()
            ));
        }
        for (i, lp) in self.logprobs.iter().enumerate() {
            match lp {
                None if i > 0 => return fail(format!("logprob {i} is null; only the first may be")),
                Some(v) if !v.is_finite() || *v > 0.0 => {
                    return fail(format!("logprob {i} = {v} is not a finite value <= 0"))
                }
                _ => {}
            }
        }
        let chars: Vec<char> = self.text.chars().collect();
        let mut cursor = 0usize;
        for (i, (&(start, end), token)) in self.token_offsets.iter().zip(&self.tokens).enumerate() {
            if start != cursor || end < start || end > chars.len() {
                return fail(format!("offset {i} = [{start}, {end}] is not contiguous with {cursor}"));
            }
            if chars[start..end].iter().copied().ne(token.chars()) {
                return fail(format!("token {i} {token:?} does not match text at [{start}, {end}]"));
            }
            cursor = end;
        }
        if cursor != chars.len() {
            return fail(format!("offsets cover {cursor} of {} characters", chars.len()));
        }
        Ok(())
    }
}

/// Half-open token index range of the pronoun inside a scored sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounSpan {
    pub token_start: usize,
    pub token_end: usize,
}

/// Maps a character range onto whole tokens. The first token may carry
/// leading whitespace before the range; anything else is a misalignment.
pub fn span_for_char_range(score: &SentenceScore, range: (usize, usize)) -> Result<PronounSpan> {
    let (start, end) = range;
    let chars: Vec<char> = score.text.chars().collect();
    let misaligned = || {
        Error::InvalidSpan(format!(
            "characters [{start}, {end}) of {:?} do not align to whole tokens",
            score.text
        ))
    };
    let first = score
        .token_offsets
        .iter()
        .position(|&(s, e)| s <= start && start < e)
        .ok_or_else(misaligned)?;
    let (token_start_char, _) = score.token_offsets[first];
    if !chars[token_start_char..start].iter().all(|c| c.is_whitespace()) {
        return Err(misaligned());
    }
    let last = score
        .token_offsets
        .iter()
        .position(|&(_, e)| e == end)
        .ok_or_else(misaligned)?;
    if last < first {
        return Err(misaligned());
    }
    Ok(PronounSpan {
        token_start: first,
        token_end: last + 1,
    })
}

/// How a multi-token pronoun's probability is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanNorm {
    /// Product of the token probabilities.
    #[default]
    Product,
    /// Geometric mean of the token probabilities.
    LengthNormalized,
}

/// Probability of the pronoun tokens given everything before them.
pub fn pronoun_prob(score: &SentenceScore, span: PronounSpan) -> Result<f64> {
    pronoun_prob_with(score, span, SpanNorm::Product)
}

pub fn pronoun_prob_with(score: &SentenceScore, span: PronounSpan, norm: SpanNorm) -> Result<f64> {
    if span.token_start == 0 {
        return Err(Error::InvalidSpan(
            "pronoun span starts at token 0, which has no conditioning context".to_string(),
        ));
    }
    if span.token_end <= span.token_start || span.token_end > score.logprobs.len() {
        return Err(Error::InvalidSpan(format!(
            "span [{}, {}) outside 1..={}",
            span.token_start,
            span.token_end,
            score.logprobs.len()
        )));
    }
    let mut total = CompensatedSum::new();
    for (i, lp) in score.logprobs[span.token_start..span.token_end].iter().enumerate() {
        match lp {
            Some(v) => total.add(*v),
            None => {
                return Err(Error::InvalidSpan(format!(
                    "token {} in span has no logprob",
                    span.token_start + i
                )))
            }
        }
    }
    let log_p = match norm {
        SpanNorm::Product => total.value(),
        SpanNorm::LengthNormalized => total.value() / (span.token_end - span.token_start) as f64,
    };
    Ok(libm::exp(log_p))
}

/// Whole-sentence aggregation used when the pronoun is not sentence-final.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Arithmetic mean of token probabilities.
    #[default]
    MeanProb,
    /// Exponentiated mean log-probability.
    GeoMean,
}

/// Mean probability over every token after the first.
pub fn sentence_mean_prob(score: &SentenceScore, mode: Aggregation) -> Result<f64> {
    let scored = score.logprobs.get(1..).unwrap_or(&[]);
    if scored.is_empty() {
        return Err(Error::Degenerate(format!(
            "sentence {:?} has no scored tokens after the first",
            score.text
        )));
    }
    let mut acc = CompensatedSum::new();
    for (i, lp) in scored.iter().enumerate() {
        let v = lp.ok_or_else(|| Error::InvalidSpan(format!("token {} has no logprob", i + 1)))?;
        acc.add(match mode {
            Aggregation::MeanProb => libm::exp(v),
            Aggregation::GeoMean => v,
        });
    }
    let mean = acc.value() / scored.len() as f64;
    Ok(match mode {
        Aggregation::MeanProb => mean,
        Aggregation::GeoMean => libm::exp(mean),
    })
}

/// Source of per-token log-probabilities for concrete sentences.
pub trait LogprobProvider {
    fn model_id(&self) -> &str;

    fn score(&self, text: &str) -> core::result::Result<SentenceScore, ProviderError>;

    /// Scores several sentences; providers with a batch transport override this.
    fn score_many(&self, texts: &[&str]) -> Vec<core::result::Result<SentenceScore, ProviderError>> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

impl<P: LogprobProvider + ?Sized> LogprobProvider for &P {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn score(&self, text: &str) -> core::result::Result<SentenceScore, ProviderError> {
        (**self).score(text)
    }

    fn score_many(&self, texts: &[&str]) -> Vec<core::result::Result<SentenceScore, ProviderError>> {
        (**self).score_many(texts)
    }
}
