//! Template instances, pronoun lexicons, and variant expansion.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRONOUN_SLOT: &str = "{P}";
pub const ENTITY_SLOT: &str = "{E}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Genderlex,
    GenderlexNeutral,
    Winograd,
    CrowsPairs,
    JpPairs,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Genderlex,
        Family::GenderlexNeutral,
        Family::Winograd,
        Family::CrowsPairs,
        Family::JpPairs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Genderlex => "genderlex",
            Family::GenderlexNeutral => "genderlex-neutral",
            Family::Winograd => "winograd",
            Family::CrowsPairs => "crows-pairs",
            Family::JpPairs => "jp-pairs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Context kinds an instance of this family must carry.
    pub fn required_contexts(self) -> &'static [ContextKind] {
        match self {
            Family::Genderlex => &[ContextKind::Occupation, ContextKind::Noun, ContextKind::Verb],
            Family::GenderlexNeutral => &[ContextKind::Noun, ContextKind::Verb],
            Family::Winograd => &[ContextKind::Occupation],
            Family::CrowsPairs | Family::JpPairs => &[ContextKind::Concept],
        }
    }

    /// Context kinds an instance of this family may carry.
    pub fn allowed_contexts(self) -> &'static [ContextKind] {
        match self {
            Family::Genderlex | Family::Winograd => &[
                ContextKind::Occupation,
                ContextKind::Noun,
                ContextKind::Verb,
                ContextKind::Group,
            ],
            Family::GenderlexNeutral => &[ContextKind::Noun, ContextKind::Verb, ContextKind::Group],
            Family::CrowsPairs | Family::JpPairs => &[ContextKind::Concept, ContextKind::Group],
        }
    }
}

impl core::fmt::Display for Family {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextKind {
    Occupation,
    Noun,
    Verb,
    Concept,
    Group,
}

impl ContextKind {
    pub const ALL: [ContextKind; 5] = [
        ContextKind::Occupation,
        ContextKind::Noun,
        ContextKind::Verb,
        ContextKind::Concept,
        ContextKind::Group,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Occupation => "occupation",
            ContextKind::Noun => "noun",
            ContextKind::Verb => "verb",
            ContextKind::Concept => "concept",
            ContextKind::Group => "group",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether the surface word must appear in the sentence itself. Concepts
    /// and groups are annotations about the sentence, not spans of it.
    pub fn is_surface(self) -> bool {
        matches!(self, ContextKind::Occupation | ContextKind::Noun | ContextKind::Verb)
    }
}

/// One dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateInstance {
    pub id: String,
    pub family: Family,
    /// Sentence with exactly one `{P}` and at most one `{E}`.
    pub template: String,
    /// Filler for `{E}`, when the template has one.
    pub entity: Option<String>,
    pub contexts: BTreeMap<ContextKind, String>,
    pub human_label: Option<String>,
}

impl TemplateInstance {
    /// Template with `{E}` filled in; `{P}` is left in place.
    pub fn resolved_template(&self) -> String {
        match &self.entity {
            Some(e) => self.template.replacen(ENTITY_SLOT, e, 1),
            None => self.template.clone(),
        }
    }

    pub fn context(&self, kind: ContextKind) -> Option<&str> {
        self.contexts.get(&kind).map(String::as_str)
    }

    /// Whitespace-separated words of a context; multiword contexts are
    /// combined in embedding space.
    pub fn context_words(&self, kind: ContextKind) -> Option<Vec<&str>> {
        self.context(kind).map(|c| c.split_whitespace().collect())
    }

    /// True when nothing but punctuation and whitespace follows `{P}`.
    pub fn pronoun_is_final(&self) -> bool {
        let resolved = self.resolved_template();
        match resolved.find(PRONOUN_SLOT) {
            Some(at) => !resolved[at + PRONOUN_SLOT.len()..].chars().any(char::is_alphanumeric),
            None => false,
        }
    }

    /// Every problem with this instance, empty when valid.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.id.trim().is_empty() {
            issues.push("empty id".to_string());
        }
        match self.template.matches(PRONOUN_SLOT).count() {
            1 => {}
            0 => issues.push(format!("template has no {PRONOUN_SLOT} placeholder")),
            n => issues.push(format!("template has {n} {PRONOUN_SLOT} placeholders, expected exactly one")),
        }
        let entities = self.template.matches(ENTITY_SLOT).count();
        match (entities, &self.entity) {
            (0, None) | (1, Some(_)) => {}
            (0, Some(_)) => issues.push(format!("entity given but template has no {ENTITY_SLOT}")),
            (1, None) => issues.push(format!("template has {ENTITY_SLOT} but no entity")),
            (n, _) => issues.push(format!("template has {n} {ENTITY_SLOT} placeholders, expected at most one")),
        }
        for kind in self.family.required_contexts() {
            if !self.contexts.contains_key(kind) {
                issues.push(format!("missing {} context", kind.as_str()));
            }
        }
        let resolved_lower = self.resolved_template().to_lowercase();
        for (kind, word) in &self.contexts {
            if !self.family.allowed_contexts().contains(kind) {
                issues.push(format!("{} context not allowed for family {}", kind.as_str(), self.family));
                continue;
            }
            if word.trim().is_empty() {
                issues.push(format!("empty {} context", kind.as_str()));
                continue;
            }
            if kind.is_surface() && !resolved_lower.contains(&word.to_lowercase()) {
                issues.push(format!("{} context {word:?} does not occur in the template", kind.as_str()));
            }
        }
        if let Some(label) = &self.human_label {
            if label.trim().is_empty() {
                issues.push("empty human_label".to_string());
            }
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("instance {}: {}", self.id, issues.join("; "))))
        }
    }
}

/// Replacement used for the occupation when building gender-neutral items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeutralEntity {
    Someone,
    Person,
}

fn is_word_byte(s: &str, idx: usize, before: bool) -> bool {
    let c = if before {
        s[..idx].chars().next_back()
    } else {
        s[idx..].chars().next()
    };
    c.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '{' || c == '}')
}

fn find_determiner(s: &str, at: usize) -> Option<usize> {
    let before = s[..at].strip_suffix(' ')?;
    for det in ["the", "a", "an"] {
        if before.len() >= det.len() {
            let start = before.len() - det.len();
            if before.is_char_boundary(start)
                && before[start..].eq_ignore_ascii_case(det)
                && !is_word_byte(before, start, true)
            {
                return Some(start);
            }
        }
    }
    None
}

fn match_case(replacement: &str, original: &str) -> String {
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) if upper => first.to_uppercase().chain(chars).collect(),
        _ => replacement.to_string(),
    }
}

/// Replaces the occupation with a gender-neutral entity and drops the
/// occupation context.
pub fn neutralize(instance: &TemplateInstance, entity: NeutralEntity) -> Result<TemplateInstance> {
    if instance.family == Family::GenderlexNeutral {
        return Err(Error::Precondition(format!("instance {} is already gender neutral", instance.id)));
    }
    let occupation = instance
        .context(ContextKind::Occupation)
        .ok_or_else(|| Error::Precondition(format!("instance {} has no occupation context", instance.id)))?
        .to_string();
    let template = instance.resolved_template();
    let lower = template.to_lowercase();
    let needle = occupation.to_lowercase();
    if lower.len() != template.len() || needle.is_empty() {
        return Err(Error::Precondition(format!(
            "cannot locate occupation {occupation:?} in instance {}",
            instance.id
        )));
    }

    let mut out = String::with_capacity(template.len());
    let mut cursor = 0;
    let mut replaced = 0;
    let mut search = 0;
    while let Some(rel) = lower[search..].find(&needle) {
        let at = search + rel;
        let end = at + needle.len();
        search = end;
        if is_word_byte(&template, at, true) || is_word_byte(&template, end, false) {
            continue;
        }
        let det = find_determiner(&template, at).filter(|&d| d >= cursor);
        let span_start = det.unwrap_or(at);
        let original = &template[span_start..end];
        let replacement = match (entity, det) {
            (NeutralEntity::Someone, _) => "someone".to_string(),
            (NeutralEntity::Person, Some(d)) => {
                let article = &template[d..at - 1];
                if article.eq_ignore_ascii_case("the") {
                    format!("{article} person")
                } else {
                    "a person".to_string()
                }
            }
            (NeutralEntity::Person, None) => "the person".to_string(),
        };
        out.push_str(&template[cursor..span_start]);
        out.push_str(&match_case(&replacement, original));
        cursor = end;
        replaced += 1;
    }
    if replaced == 0 {
        return Err(Error::Precondition(format!(
            "occupation {occupation:?} not found as a word in instance {}",
            instance.id
        )));
    }
    out.push_str(&template[cursor..]);

    let mut contexts = instance.contexts.clone();
    contexts.remove(&ContextKind::Occupation);
    contexts.retain(|kind, word| !kind.is_surface() || out.to_lowercase().contains(&word.to_lowercase()));
    Ok(TemplateInstance {
        id: instance.id.clone(),
        family: Family::GenderlexNeutral,
        template: out,
        entity: None,
        contexts,
        human_label: instance.human_label.clone(),
    })
}

/// One pronoun (or group) label with its surface form and the words used to
/// represent it in embedding space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub label: String,
    pub pronoun: String,
    pub embedding_words: Vec<String>,
}

impl LexiconEntry {
    pub fn new(label: &str, pronoun: &str, words: &[&str]) -> Self {
        Self {
            label: label.to_string(),
            pronoun: pronoun.to_string(),
            embedding_words: words.iter().map(|w| w.to_string()).collect(),
        }
    }
}

/// Ordered pronoun lexicon. Column order in every report follows entry order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounLexicon {
    entries: Vec<LexiconEntry>,
}

pub const NEUTRAL_LABEL: &str = "neutral";

impl PronounLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("pronoun lexicon is empty".to_string()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.label.trim().is_empty() || e.pronoun.trim().is_empty() {
                return Err(Error::Validation(format!("lexicon entry {i} has an empty label or pronoun")));
            }
            if e.embedding_words.iter().all(|w| w.trim().is_empty()) {
                return Err(Error::Validation(format!("lexicon entry {:?} has no embedding query word", e.label)));
            }
            for other in &entries[..i] {
                if other.label == e.label {
                    return Err(Error::Validation(format!("duplicate lexicon label {:?}", e.label)));
                }
                if other.pronoun == e.pronoun {
                    return Err(Error::Validation(format!(
                        "labels {:?} and {:?} share the pronoun {:?}",
                        other.label, e.label, e.pronoun
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// English `him` / `her`.
    pub fn english_binary() -> Self {
        Self {
            entries: alloc::vec![LexiconEntry::new("m", "him", &["him"]), LexiconEntry::new("w", "her", &["her"])],
        }
    }

    /// English `him` / `her` / `them`.
    pub fn english_with_neutral() -> Self {
        let mut lex = Self::english_binary();
        lex.entries.push(LexiconEntry::new(NEUTRAL_LABEL, "them", &["them"]));
        lex
    }

    /// Japanese 彼 / 彼女. Name lists for the embedding side are left to the
    /// user's configuration.
    pub fn japanese() -> Self {
        Self {
            entries: alloc::vec![LexiconEntry::new("m", "彼", &["彼"]), LexiconEntry::new("w", "彼女", &["彼女"])],
        }
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn get(&self, label: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn neutral(&self) -> Option<&LexiconEntry> {
        self.get(NEUTRAL_LABEL)
    }

    /// Entries whose label is not `neutral`, in order.
    pub fn genders(&self) -> Self {
        let entries: Vec<_> = self.entries.iter().filter(|e| e.label != NEUTRAL_LABEL).cloned().collect();
        Self { entries }
    }

    /// Sub-lexicon with the given labels, in the given order.
    pub fn select(&self, labels: &[&str]) -> Result<Self> {
        let entries = labels
            .iter()
            .map(|l| {
                self.get(l)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("lexicon has no label {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Same entries with the label strings of `a` and `b` exchanged.
    pub fn swap_labels(&self, a: &str, b: &str) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if e.label == a {
                    e.label = b.to_string();
                } else if e.label == b {
                    e.label = a.to_string();
                }
                e
            })
            .collect();
        Self { entries }
    }
}

/// One concrete sentence for one lexicon label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub sentence: String,
    /// Character range of the substituted pronoun.
    pub pronoun_range: (usize, usize),
}

/// Substitutes each lexicon pronoun into the template. A pronoun opening
/// the sentence is capitalized.
pub fn expand_variants(instance: &TemplateInstance, lexicon: &PronounLexicon) -> Vec<Variant> {
    let resolved = instance.resolved_template();
    let (head, tail) = match resolved.find(PRONOUN_SLOT) {
        Some(at) => (&resolved[..at], &resolved[at + PRONOUN_SLOT.len()..]),
        None => (resolved.as_str(), ""),
    };
    let at_start = head.trim().is_empty();
    let start = head.chars().count();
    lexicon
        .entries()
        .iter()
        .map(|e| {
            let pronoun = if at_start {
                match_case(&e.pronoun, "X")
            } else {
                e.pronoun.clone()
            };
            let end = start + pronoun.chars().count();
            Variant {
                label: e.label.clone(),
                sentence: format!("{head}{pronoun}{tail}"),
                pronoun_range: (start, end),
            }
        })
        .collect()
}
