//! The cloze bias score and per-instance scoring.
//!
//! For a pronoun (or group) label `g` and a context `c`, the score is the
//! language model's probability of the `g` sentence raised to
//! `1 - sim(g, c)`: high similarity pushes the probability towards 1, zero
//! similarity leaves it unchanged.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{expand_variants, ContextKind, PronounLexicon, TemplateInstance, Variant};
use crate::embedding::{similarity, EmbeddingTable, SimilarityResult};
use crate::error::{Error, Result};
use crate::lm::{pronoun_prob_with, sentence_mean_prob, span_for_char_range, Aggregation, LogprobProvider, SpanNorm};
use crate::numeric::{mean, sum};

/// Probability floor substituted for an underflowed base probability
/// outside strict mode.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClozeMode {
    /// Probability of the sentence-final pronoun tokens.
    #[default]
    ClozeLast,
    /// Mean probability of the whole sentence.
    ClozeAll,
}

/// How several contexts are folded into one exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinedFormula {
    /// Mean of `1 - sim` over contexts.
    #[default]
    Mean,
    /// Sum of `1 - sim` over contexts.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub mode: ClozeMode,
    pub aggregation: Aggregation,
    pub combined: CombinedFormula,
    pub span_norm: SpanNorm,
    /// Fail on underflowed probabilities instead of flooring them.
    pub strict: bool,
}

/// Which context an instance was scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSelector {
    /// Language model only, no similarity update.
    None,
    Occupation,
    Noun,
    Verb,
    Concept,
    /// Every surface/concept context of the instance together.
    Combined,
    /// Social-group terms against the occupation on the neutral sentence.
    Group,
}

impl ContextSelector {
    pub const ALL: [ContextSelector; 7] = [
        ContextSelector::None,
        ContextSelector::Occupation,
        ContextSelector::Noun,
        ContextSelector::Verb,
        ContextSelector::Concept,
        ContextSelector::Combined,
        ContextSelector::Group,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextSelector::None => "none",
            ContextSelector::Occupation => "occupation",
            ContextSelector::Noun => "noun",
            ContextSelector::Verb => "verb",
            ContextSelector::Concept => "concept",
            ContextSelector::Combined => "combined",
            ContextSelector::Group => "group",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn kind(self) -> Option<ContextKind> {
        match self {
            ContextSelector::Occupation => Some(ContextKind::Occupation),
            ContextSelector::Noun => Some(ContextKind::Noun),
            ContextSelector::Verb => Some(ContextKind::Verb),
            ContextSelector::Concept => Some(ContextKind::Concept),
            _ => None,
        }
    }
}

impl From<ContextKind> for ContextSelector {
    fn from(kind: ContextKind) -> Self {
        match kind {
            ContextKind::Occupation => ContextSelector::Occupation,
            ContextKind::Noun => ContextSelector::Noun,
            ContextKind::Verb => ContextSelector::Verb,
            ContextKind::Concept => ContextSelector::Concept,
            ContextKind::Group => ContextSelector::Group,
        }
    }
}

/// Similarity of one label against one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSimilarity {
    pub kind: ContextKind,
    pub value: f64,
    pub raw_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub label: String,
    pub sentence: String,
    pub base_prob: f64,
    pub similarities: Vec<ContextSimilarity>,
    /// Exponent applied to `base_prob`; `1 - sim` for a single context.
    pub exponent: f64,
    /// `1 - exponent`.
    pub sim_used: f64,
    pub cgs: f64,
    /// `base_prob` normalized over the labels of the instance.
    pub baseline_ratio: f64,
    /// `cgs` normalized over the labels of the instance.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Winner {
    Label(String),
    Tie(Vec<String>),
}

impl Winner {
    /// Share of one win this label receives: 1, 0, or split evenly on a tie.
    pub fn credit(&self, label: &str) -> f64 {
        match self {
            Winner::Label(l) => f64::from(u8::from(l == label)),
            Winner::Tie(labels) if labels.iter().any(|l| l == label) => 1.0 / labels.len() as f64,
            Winner::Tie(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasResult {
    pub instance_id: String,
    pub mode: ClozeMode,
    pub context: ContextSelector,
    /// Context words the labels were compared against.
    pub context_words: Vec<String>,
    pub variants: Vec<VariantScore>,
    pub winner: Winner,
}

impl BiasResult {
    pub fn labels(&self) -> Vec<&str> {
        self.variants.iter().map(|v| v.label.as_str()).collect()
    }

    pub fn variant(&self, label: &str) -> Option<&VariantScore> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Non-fatal events collected during scoring.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Warning {
    /// Instance id or word the warning is about.
    pub subject: String,
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningKind {
    Oov,
    Underflow,
    Tie,
    DegenerateVector,
    ModeForced,
    Smoothing,
    Weat,
    DuplicateEmbedding,
}

/// Cloze bias score: `base_prob ^ (1 - sim)`.
pub fn cgs(base_prob: f64, sim: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sim) || sim.is_nan() {
        return Err(Error::Precondition(format!("similarity {sim} outside [0, 1]")));
    }
    cgs_with_exponent(base_prob, 1.0 - sim)
}

/// `base_prob ^ exponent` with the probability checks of [`cgs`].
pub fn cgs_with_exponent(base_prob: f64, exponent: f64) -> Result<f64> {
    if base_prob == 0.0 {
        return Err(Error::Degenerate("base probability is zero".to_string()));
    }
    if !(base_prob > 0.0 && base_prob <= 1.0) {
        return Err(Error::Precondition(format!("base probability {base_prob} outside (0, 1]")));
    }
    if !exponent.is_finite() || exponent < 0.0 {
        return Err(Error::Precondition(format!("exponent {exponent} must be finite and >= 0")));
    }
    Ok(libm::pow(base_prob, exponent))
}

/// Normalizes positive weights to sum to one.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let total = sum(values.iter().copied());
    values.iter().map(|v| v / total).collect()
}

fn pick_winner(labels: &[&str], scores: &[f64]) -> Winner {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<String> = labels
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s == best)
        .map(|(l, _)| l.to_string())
        .collect();
    if top.len() == 1 {
        Winner::Label(top.into_iter().next().unwrap_or_default())
    } else {
        Winner::Tie(top)
    }
}

/// One label's inputs before normalization.
#[derive(Debug, Clone)]
pub struct LabelInput {
    pub label: String,
    pub sentence: String,
    pub base_prob: f64,
    pub similarities: Vec<ContextSimilarity>,
    pub exponent: f64,
}

/// Builds a [`BiasResult`] from per-label base probabilities and exponents.
pub fn assemble(
    instance_id: &str,
    mode: ClozeMode,
    context: ContextSelector,
    context_words: Vec<String>,
    inputs: Vec<LabelInput>,
    warnings: &mut Vec<Warning>,
) -> Result<BiasResult> {
    let mut cgs_values = Vec::with_capacity(inputs.len());
    for input in &inputs {
        cgs_values.push(cgs_with_exponent(input.base_prob, input.exponent)?);
    }
    let bases: Vec<f64> = inputs.iter().map(|i| i.base_prob).collect();
    let baseline = normalize(&bases);
    let ratios = normalize(&cgs_values);
    let labels: Vec<&str> = inputs.iter().map(|i| i.label.as_str()).collect();
    let winner = pick_winner(&labels, &cgs_values);
    if let Winner::Tie(tied) = &winner {
        warnings.push(Warning {
            subject: instance_id.to_string(),
            kind: WarningKind::Tie,
            message: format!("{} tie between {}", context.as_str(), tied.join(", ")),
        });
    }
    let variants = inputs
        .into_iter()
        .zip(cgs_values)
        .zip(baseline.into_iter().zip(ratios))
        .map(|((input, cgs), (baseline_ratio, ratio))| VariantScore {
            label: input.label,
            sentence: input.sentence,
            base_prob: input.base_prob,
            similarities: input.similarities,
            exponent: input.exponent,
            sim_used: 1.0 - input.exponent,
            cgs,
            baseline_ratio,
            ratio,
        })
        .collect();
    Ok(BiasResult {
        instance_id: instance_id.to_string(),
        mode,
        context,
        context_words,
        variants,
        winner,
    })
}

/// Everything instance scoring reads besides the instance itself.
pub struct Scorer<'a, P: ?Sized> {
    pub table: &'a EmbeddingTable,
    pub provider: &'a P,
    pub options: ScoreOptions,
}

impl<'a, P: LogprobProvider + ?Sized> Scorer<'a, P> {
    pub fn new(table: &'a EmbeddingTable, provider: &'a P, options: ScoreOptions) -> Self {
        Self {
            table,
            provider,
            options,
        }
    }

    fn check_mode(&self, instance: &TemplateInstance) -> Result<()> {
        if self.options.mode == ClozeMode::ClozeLast && !instance.pronoun_is_final() {
            return Err(Error::Mode(format!(
                "instance {}: cloze-last needs a sentence-final pronoun",
                instance.id
            )));
        }
        Ok(())
    }

    /// Language-model probability of one variant sentence.
    pub fn base_prob(&self, instance_id: &str, variant: &Variant, warnings: &mut Vec<Warning>) -> Result<f64> {
        let score = self.provider.score(&variant.sentence)?;
        let p = match self.options.mode {
            ClozeMode::ClozeLast => {
                let span = span_for_char_range(&score, variant.pronoun_range)?;
                pronoun_prob_with(&score, span, self.options.span_norm)?
            }
            ClozeMode::ClozeAll => sentence_mean_prob(&score, self.options.aggregation)?,
        };
        if p > 0.0 {
            return Ok(p);
        }
        if self.options.strict {
            return Err(Error::Degenerate(format!(
                "instance {instance_id}: probability of {:?} underflowed to zero",
                variant.sentence
            )));
        }
        warnings.push(Warning {
            subject: instance_id.to_string(),
            kind: WarningKind::Underflow,
            message: format!(
                "{}: probability underflowed, floored at {UNDERFLOW_FLOOR:e}",
                variant.label
            ),
        });
        Ok(UNDERFLOW_FLOOR)
    }

    fn similarity_to(
        &self,
        instance_id: &str,
        label: &str,
        query: &[String],
        kind: ContextKind,
        words: &[&str],
        warnings: &mut Vec<Warning>,
    ) -> ContextSimilarity {
        let SimilarityResult {
            value,
            raw_cosine,
            oov_terms,
            degenerate,
        } = similarity(self.table, query, words);
        if !oov_terms.is_empty() {
            warnings.push(Warning {
                subject: instance_id.to_string(),
                kind: WarningKind::Oov,
                message: format!("{label} vs {}: out of vocabulary {}", kind.as_str(), oov_terms.join(" ")),
            });
        }
        if degenerate {
            warnings.push(Warning {
                subject: instance_id.to_string(),
                kind: WarningKind::DegenerateVector,
                message: format!("{label} vs {}: zero-norm vector, similarity set to 0", kind.as_str()),
            });
        }
        ContextSimilarity {
            kind,
            value,
            raw_cosine,
        }
    }

    fn score_contexts(
        &self,
        instance: &TemplateInstance,
        lexicon: &PronounLexicon,
        selector: ContextSelector,
        kinds: &[ContextKind],
        formula: CombinedFormula,
        warnings: &mut Vec<Warning>,
    ) -> Result<BiasResult> {
        self.check_mode(instance)?;
        let mut context_words = Vec::new();
        let mut per_kind = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let words = instance.context_words(kind).ok_or_else(|| {
                Error::Precondition(format!("instance {} has no {} context", instance.id, kind.as_str()))
            })?;
            context_words.extend(words.iter().map(|w| w.to_string()));
            per_kind.push((kind, words));
        }
        let mut inputs = Vec::new();
        for variant in expand_variants(instance, lexicon) {
            let entry = lexicon
                .get(&variant.label)
                .ok_or_else(|| Error::Precondition(format!("lexicon lost label {}", variant.label)))?;
            let base_prob = self.base_prob(&instance.id, &variant, warnings)?;
            let similarities: Vec<ContextSimilarity> = per_kind
                .iter()
                .map(|(kind, words)| {
                    self.similarity_to(&instance.id, &variant.label, &entry.embedding_words, *kind, words, warnings)
                })
                .collect();
            let gaps = similarities.iter().map(|s| 1.0 - s.value);
            let exponent = if similarities.is_empty() {
                1.0
            } else {
                match formula {
                    CombinedFormula::Mean => mean(gaps).unwrap_or(1.0),
                    CombinedFormula::Sum => sum(gaps),
                }
            };
            inputs.push(LabelInput {
                label: variant.label,
                sentence: variant.sentence,
                base_prob,
                similarities,
                exponent,
            });
        }
        assemble(&instance.id, self.options.mode, selector, context_words, inputs, warnings)
    }

    /// Scores one instance against one context (or none, for the pure
    /// language-model baseline).
    pub fn score_instance(
        &self,
        instance: &TemplateInstance,
        lexicon: &PronounLexicon,
        context: Option<ContextKind>,
        warnings: &mut Vec<Warning>,
    ) -> Result<BiasResult> {
        let (selector, kinds) = match context {
            Some(kind) => (ContextSelector::from(kind), alloc::vec![kind]),
            None => (ContextSelector::None, Vec::new()),
        };
        self.score_contexts(instance, lexicon, selector, &kinds, CombinedFormula::Mean, warnings)
    }

    /// Scores one instance against all of its contexts at once.
    pub fn combined_score(
        &self,
        instance: &TemplateInstance,
        lexicon: &PronounLexicon,
        warnings: &mut Vec<Warning>,
    ) -> Result<BiasResult> {
        let kinds: Vec<ContextKind> = instance
            .contexts
            .keys()
            .copied()
            .filter(|k| *k != ContextKind::Group)
            .collect();
        if kinds.is_empty() {
            return Err(Error::Precondition(format!("instance {} has no contexts to combine", instance.id)));
        }
        self.score_contexts(
            instance,
            lexicon,
            ContextSelector::Combined,
            &kinds,
            self.options.combined,
            warnings,
        )
    }

    /// Scores social groups: the neutral-pronoun sentence probability is
    /// updated once per group by the similarity of the group's combined
    /// terms to the occupation.
    pub fn group_score(
        &self,
        instance: &TemplateInstance,
        neutral: &crate::corpus::LexiconEntry,
        groups: &[GroupSpec],
        warnings: &mut Vec<Warning>,
    ) -> Result<BiasResult> {
        self.check_mode(instance)?;
        if groups.is_empty() {
            return Err(Error::Precondition("no groups to compare".to_string()));
        }
        let occupation = instance.context_words(ContextKind::Occupation).ok_or_else(|| {
            Error::Precondition(format!("instance {} has no occupation context", instance.id))
        })?;
        let neutral_lexicon = PronounLexicon::new(alloc::vec![neutral.clone()])?;
        let variant = expand_variants(instance, &neutral_lexicon)
            .into_iter()
            .next()
            .ok_or_else(|| Error::Precondition("neutral variant missing".to_string()))?;
        let base_prob = self.base_prob(&instance.id, &variant, warnings)?;
        let inputs = groups
            .iter()
            .map(|group| {
                let sim = self.similarity_to(
                    &instance.id,
                    &group.label,
                    &group.terms,
                    ContextKind::Occupation,
                    &occupation,
                    warnings,
                );
                LabelInput {
                    label: group.label.clone(),
                    sentence: variant.sentence.clone(),
                    base_prob,
                    exponent: 1.0 - sim.value,
                    similarities: alloc::vec![sim],
                }
            })
            .collect();
        assemble(
            &instance.id,
            self.options.mode,
            ContextSelector::Group,
            occupation.iter().map(|w| w.to_string()).collect(),
            inputs,
            warnings,
        )
    }
}

/// A social group and the words that represent it in embedding space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    pub terms: Vec<String>,
}

impl GroupSpec {
    pub fn new(label: &str, terms: &[&str]) -> Self {
        Self {
            label: label.to_string(),
            terms: terms.iter().map(|t| t.to_string()).collect(),
        }
    }
}
