//! Pronoun and group lexicon configuration (TOML or JSON).

use std::path::Path;

use clozebias_core::corpus::{LexiconEntry, PronounLexicon, NEUTRAL_LABEL};
use clozebias_core::scoring::GroupSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EN: &str = include_str!("../lexicons/en.toml");
const EN_NEUTRAL: &str = include_str!("../lexicons/en-neutral.toml");
const JA: &str = include_str!("../lexicons/ja.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub label: String,
    pub pronoun: String,
    /// Embedding query words; defaults to the pronoun itself.
    #[serde(default)]
    pub words: Vec<String>,
    /// Extra query words such as given names.
    #[serde(default)]
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    pub entries: Vec<EntryConfig>,
    /// Labels compared in gender scoring; defaults to every non-neutral entry.
    #[serde(default)]
    pub genders: Option<Vec<String>>,
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
}

/// Resolved lexicon used by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub pronouns: PronounLexicon,
    pub genders: Vec<String>,
    pub groups: Vec<GroupSpec>,
}

impl Lexicon {
    /// The sub-lexicon used for gender comparisons.
    pub fn gender_lexicon(&self) -> Result<PronounLexicon> {
        let labels: Vec<&str> = self.genders.iter().map(String::as_str).collect();
        Ok(self.pronouns.select(&labels)?)
    }

    pub fn neutral(&self) -> Option<&LexiconEntry> {
        self.pronouns.neutral()
    }
}

impl LexiconConfig {
    pub fn resolve(self) -> Result<Lexicon> {
        let entries = self
            .entries
            .into_iter()
            .map(|e| {
                let mut words = if e.words.is_empty() { vec![e.pronoun.clone()] } else { e.words };
                words.extend(e.names.into_iter().filter(|n| !n.trim().is_empty()));
                LexiconEntry {
                    label: e.label,
                    pronoun: e.pronoun,
                    embedding_words: words,
                }
            })
            .collect();
        let pronouns = PronounLexicon::new(entries)?;
        let genders = match self.genders {
            Some(g) => g,
            None => pronouns.genders().labels().iter().map(|s| s.to_string()).collect(),
        };
        if genders.is_empty() {
            return Err(Error::Config("lexicon has no gender labels".into()));
        }
        pronouns.select(&genders.iter().map(String::as_str).collect::<Vec<_>>())?;
        for g in &self.groups {
            if g.terms.iter().all(|t| t.trim().is_empty()) {
                return Err(Error::Config(format!("group {:?} has no terms", g.label)));
            }
        }
        if !self.groups.is_empty() && pronouns.get(NEUTRAL_LABEL).is_none() {
            return Err(Error::Config(format!(
                "groups need a {NEUTRAL_LABEL:?} lexicon entry for the neutral-pronoun sentence"
            )));
        }
        Ok(Lexicon {
            pronouns,
            genders,
            groups: self.groups,
        })
    }
}

fn parse(text: &str, json: bool, origin: &str) -> Result<Lexicon> {
    let config: LexiconConfig = if json {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?
    };
    config.resolve()
}

/// Loads `builtin:en`, `builtin:en-neutral`, `builtin:ja`, or a `.toml` /
/// `.json` file.
pub fn load_lexicon(spec: &str) -> Result<Lexicon> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let text = match name {
            "en" => EN,
            "en-neutral" => EN_NEUTRAL,
            "ja" => JA,
            other => return Err(Error::Config(format!("unknown builtin lexicon {other:?}"))),
        };
        return parse(text, false, spec);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse(&text, json, spec)
}
