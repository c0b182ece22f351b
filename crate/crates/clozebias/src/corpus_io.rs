//! JSON-lines corpus reading and writing.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use clozebias_core::corpus::{ContextKind, Family, TemplateInstance};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform on-disk record for every family.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noun: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_label: Option<String>,
}

impl CorpusRecord {
    fn into_instance(self, family: Family, fallback_id: String) -> TemplateInstance {
        let mut contexts = BTreeMap::new();
        for (kind, value) in [
            (ContextKind::Occupation, self.occupation),
            (ContextKind::Noun, self.noun),
            (ContextKind::Verb, self.verb),
            (ContextKind::Concept, self.concept),
            (ContextKind::Group, self.group),
        ] {
            if let Some(v) = value {
                contexts.insert(kind, v);
            }
        }
        TemplateInstance {
            id: self.id.unwrap_or(fallback_id),
            family,
            template: self.template,
            entity: self.entity,
            contexts,
            human_label: self.human_label,
        }
    }
}

impl From<&TemplateInstance> for CorpusRecord {
    fn from(i: &TemplateInstance) -> Self {
        let get = |k| i.contexts.get(&k).cloned();
        Self {
            id: Some(i.id.clone()),
            family: Some(i.family),
            template: i.template.clone(),
            entity: i.entity.clone(),
            occupation: get(ContextKind::Occupation),
            noun: get(ContextKind::Noun),
            verb: get(ContextKind::Verb),
            concept: get(ContextKind::Concept),
            group: get(ContextKind::Group),
            human_label: i.human_label.clone(),
        }
    }
}

/// Reads and validates a corpus of one family. Records without an id get
/// their 1-based line number. Every invalid line is reported.
pub fn read_corpus<R: BufRead>(reader: R, path: &Path, family: Family) -> Result<Vec<TemplateInstance>> {
    let mut instances = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                issues.push(format!("line {lineno}: {e}"));
                continue;
            }
        };
        if let Some(declared) = record.family {
            if declared != family {
                issues.push(format!("line {lineno}: record family {declared} but corpus family {family}"));
                continue;
            }
        }
        let instance = record.into_instance(family, lineno.to_string());
        let mut problems = instance.issues();
        if !seen.insert(instance.id.clone()) {
            problems.push(format!("duplicate id {:?}", instance.id));
        }
        if problems.is_empty() {
            instances.push(instance);
        } else {
            issues.push(format!("line {lineno}: {}", problems.join("; ")));
        }
    }
    if issues.is_empty() {
        Ok(instances)
    } else {
        Err(Error::Lines {
            path: path.to_path_buf(),
            issues,
        })
    }
}

pub fn parse_corpus(path: &Path, family: Family) -> Result<Vec<TemplateInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path, family)
}

/// GenderLex templates: `id, template, occupation, noun, verb`.
pub fn parse_genderlex(path: &Path) -> Result<Vec<TemplateInstance>> {
    parse_corpus(path, Family::Genderlex)
}

/// WinoBias / WinoGender items with the first entity already neutralized.
/// The pronoun may sit anywhere, so these are usually scored in cloze-all mode.
pub fn parse_winograd(path: &Path) -> Result<Vec<TemplateInstance>> {
    parse_corpus(path, Family::Winograd)
}

/// Stereotype sentences annotated with a concept (CrowS-Pairs or Japanese).
pub fn parse_concept_pairs(path: &Path, family: Family) -> Result<Vec<TemplateInstance>> {
    if !matches!(family, Family::CrowsPairs | Family::JpPairs) {
        return Err(Error::Config(format!("{family} is not a concept-pair family")));
    }
    parse_corpus(path, family)
}

pub fn write_corpus<W: Write>(mut out: W, instances: &[TemplateInstance]) -> std::io::Result<()> {
    for i in instances {
        writeln!(out, "{}", serde_json::to_string(&CorpusRecord::from(i))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, family: Family) -> Result<Vec<TemplateInstance>> {
        read_corpus(text.as_bytes(), Path::new("c.jsonl"), family)
    }

    #[test]
    fn genderlex_example() {
        let v = read(
            r#"{"id":"1","template":"The chef mentioned that the recipe was crafted by {P}.","occupation":"chef","noun":"recipe","verb":"crafted"}"#,
            Family::Genderlex,
        )
        .unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].contexts.len(), 3);
    }

    #[test]
    fn reports_every_bad_line() {
        let text = concat!(
            r#"{"id":"1","template":"The chef mentioned that the recipe was crafted.","occupation":"chef","noun":"recipe","verb":"crafted"}"#,
            "\n",
            r#"{"id":"2","template":"The chef made soup for {P}.","occupation":"chef","noun":"bread","verb":"made"}"#,
            "\n",
            r#"{"id":"3","template":"The chef made bread for {P}.","occupation":"chef","verb":"made"}"#,
            "\n",
        );
        match read(text, Family::Genderlex) {
            Err(Error::Lines { issues, .. }) => {
                assert_eq!(issues.len(), 3);
                assert!(issues[0].starts_with("line 1") && issues[0].contains("{P}"));
                assert!(issues[1].contains("\"bread\""));
                assert!(issues[2].contains("missing noun"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn winograd_and_concepts() {
        let v = read(
            r#"{"template":"The person argued with the designer and slapped {P} in the face.","occupation":"designer","verb":"slapped"}"#,
            Family::Winograd,
        )
        .unwrap();
        assert_eq!(v[0].id, "1");
        assert!(!v[0].pronoun_is_final());
        read(r#"{"template":"The technician told the customer that {P} could pay with cash.","occupation":"technician"}"#, Family::Winograd).unwrap();
        assert!(read(r#"{"template":"The person slapped {P}.","verb":"slapped"}"#, Family::Winograd).is_err());

        let c = read(r#"{"template":"{P} are bad at learning.","concept":"ineptitude"}"#, Family::CrowsPairs).unwrap();
        assert_eq!(c[0].context(ContextKind::Concept), Some("ineptitude"));
        assert!(read(r#"{"template":"{P} are bad at learning."}"#, Family::CrowsPairs).is_err());
        assert!(read(r#"{"template":"{P} are bad at learning.","concept":" "}"#, Family::CrowsPairs).is_err());
    }

    #[test]
    fn family_mismatch_and_duplicates() {
        assert!(read(r#"{"family":"winograd","template":"x {P}.","concept":"c"}"#, Family::CrowsPairs).is_err());
        let dup = "{\"id\":\"a\",\"template\":\"x {P}.\",\"concept\":\"c\"}\n{\"id\":\"a\",\"template\":\"y {P}.\",\"concept\":\"c\"}\n";
        assert!(read(dup, Family::CrowsPairs).is_err());
    }
}
