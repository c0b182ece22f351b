//! Run configuration.

use std::path::PathBuf;

use clozebias_core::corpus::Family;
use clozebias_core::embedding::EmbeddingFormat;
use clozebias_core::metrics::{KlDirection, RatioAggregation, WeatStatistic};
use clozebias_core::mock::MockLm;
use clozebias_core::scoring::{ContextSelector, ScoreOptions};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderSpec {
    File {
        path: PathBuf,
    },
    Http {
        url: String,
        model_id: String,
        max_in_flight: usize,
        attempts: u32,
    },
    Mock {
        seed: u64,
        model_id: String,
    },
}

impl ProviderSpec {
    pub fn mock() -> Self {
        ProviderSpec::Mock {
            seed: 0,
            model_id: MockLm::DEFAULT_MODEL_ID.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub family: Family,
    pub embeddings: Vec<PathBuf>,
    pub embedding_format: Option<EmbeddingFormat>,
    pub case_fold: bool,
    pub provider: ProviderSpec,
    pub score: ScoreOptions,
    pub ratio: RatioAggregation,
    pub kl: KlDirection,
    pub weat: WeatStatistic,
    /// `builtin:<name>` or a lexicon file path.
    pub lexicon: String,
    /// Contexts to score; `None` picks the family default.
    pub contexts: Option<Vec<ContextSelector>>,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, family: Family, embeddings: Vec<PathBuf>, provider: ProviderSpec) -> Self {
        Self {
            corpus: corpus.into(),
            family,
            embeddings,
            embedding_format: None,
            case_fold: true,
            provider,
            score: ScoreOptions::default(),
            ratio: RatioAggregation::default(),
            kl: KlDirection::default(),
            weat: WeatStatistic::default(),
            lexicon: "builtin:en".to_string(),
            contexts: None,
        }
    }

    /// Contexts to score, validated against the family and lexicon.
    pub fn resolved_contexts(&self, lexicon: &Lexicon) -> Result<Vec<ContextSelector>> {
        let contexts = match &self.contexts {
            Some(c) => c.clone(),
            None => default_contexts(self.family, lexicon),
        };
        if contexts.is_empty() {
            return Err(Error::Config("no contexts selected".into()));
        }
        for (i, c) in contexts.iter().enumerate() {
            if contexts[..i].contains(c) {
                return Err(Error::Config(format!("context {} listed twice", c.as_str())));
            }
            match c {
                ContextSelector::None | ContextSelector::Combined => {}
                ContextSelector::Group => {
                    if lexicon.groups.is_empty() || lexicon.neutral().is_none() {
                        return Err(Error::Config(
                            "group context needs lexicon groups and a neutral entry".into(),
                        ));
                    }
                    if !self.family.required_contexts().contains(&clozebias_core::corpus::ContextKind::Occupation) {
                        return Err(Error::Config(format!("group context needs occupations; {} has none", self.family)));
                    }
                }
                other => {
                    let kind = other.kind().ok_or_else(|| Error::Config(format!("bad context {}", other.as_str())))?;
                    if !self.family.allowed_contexts().contains(&kind) {
                        return Err(Error::Config(format!(
                            "context {} is not valid for family {}",
                            other.as_str(),
                            self.family
                        )));
                    }
                }
            }
        }
        Ok(contexts)
    }
}

pub fn default_contexts(family: Family, lexicon: &Lexicon) -> Vec<ContextSelector> {
    use ContextSelector::*;
    let mut contexts = match family {
        Family::Genderlex => vec![None, Occupation, Noun, Verb, Combined],
        Family::GenderlexNeutral => vec![None, Noun, Verb, Combined],
        Family::Winograd => vec![None, Occupation, Combined],
        Family::CrowsPairs | Family::JpPairs => vec![None, Concept],
    };
    if matches!(family, Family::Genderlex | Family::Winograd) && !lexicon.groups.is_empty() && lexicon.neutral().is_some() {
        contexts.push(Group);
    }
    contexts
}

pub fn parse_contexts(list: &str) -> Result<Vec<ContextSelector>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| ContextSelector::parse(s).ok_or_else(|| Error::Config(format!("unknown context {s:?}"))))
        .collect()
}
