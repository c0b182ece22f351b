//! Conversion of raw benchmark distributions into the corpus format.
//!
//! Context annotation (which occupation and verb the pronoun depends on, the
//! stereotype concept) is never guessed: inputs must carry it.

use std::collections::BTreeMap;
use std::io::{BufRead, Read};
use std::path::Path;

use clozebias_core::corpus::{neutralize, ContextKind, Family, NeutralEntity, TemplateInstance, PRONOUN_SLOT};

use crate::error::{Error, Result};

const OBJECT_PRONOUNS: [&str; 3] = ["him", "her", "them"];

/// Outcome of a conversion: converted items plus skipped lines and why.
#[derive(Debug, Default)]
pub struct Converted {
    pub instances: Vec<TemplateInstance>,
    pub skipped: Vec<String>,
}

fn neutral_phrase(original: &str, entity: NeutralEntity) -> String {
    let lower = original.to_lowercase();
    let phrase = match entity {
        NeutralEntity::Someone => "someone",
        NeutralEntity::Person if lower.starts_with("a ") || lower.starts_with("an ") => "a person",
        NeutralEntity::Person => "the person",
    };
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = phrase.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
    } else {
        phrase.to_string()
    }
}

/// Converts one bracketed WinoBias line, e.g.
/// `[The developer] argued with [the designer] and slapped [him] in the face.`,
/// given the annotated occupation. Entities other than the annotated
/// occupation are neutralized; the object pronoun becomes `{P}`.
pub fn convert_winobias_sentence(sentence: &str, occupation: &str, entity: NeutralEntity) -> std::result::Result<String, String> {
    let body = sentence.trim();
    let body = body.trim_start_matches(|c: char| c.is_ascii_digit()).trim_start();
    let mut out = String::new();
    let mut rest = body;
    let mut pronouns = 0;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find(']').ok_or("unbalanced brackets")? + open;
        let inner = &rest[open + 1..close];
        let lower = inner.to_lowercase();
        if OBJECT_PRONOUNS.contains(&lower.as_str()) {
            out.push_str(PRONOUN_SLOT);
            pronouns += 1;
        } else if ["he", "she", "his", "hers", "they", "their"].contains(&lower.as_str()) {
            return Err(format!("pronoun {inner:?} is not an object pronoun"));
        } else if lower.split_whitespace().any(|w| w == occupation.to_lowercase()) {
            out.push_str(inner);
        } else {
            out.push_str(&neutral_phrase(inner, entity));
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    match pronouns {
        1 => Ok(out),
        0 => Err("no bracketed object pronoun".into()),
        n => Err(format!("{n} bracketed pronouns")),
    }
}

/// Tab-separated `sentence, occupation[, verb]` lines in WinoBias bracket
/// notation.
pub fn convert_winobias<R: BufRead>(reader: R, path: &Path, entity: NeutralEntity) -> Result<Converted> {
    let mut converted = Converted::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if lineno == 1 && fields[0].trim().eq_ignore_ascii_case("sentence") {
            continue;
        }
        if fields.len() < 2 || fields[1].trim().is_empty() {
            converted.skipped.push(format!("line {lineno}: missing occupation annotation"));
            continue;
        }
        let occupation = fields[1].trim();
        match convert_winobias_sentence(fields[0], occupation, entity) {
            Ok(template) => {
                let mut contexts = BTreeMap::from([(ContextKind::Occupation, occupation.to_string())]);
                if let Some(verb) = fields.get(2).map(|v| v.trim()).filter(|v| !v.is_empty()) {
                    contexts.insert(ContextKind::Verb, verb.to_string());
                }
                let instance = TemplateInstance {
                    id: lineno.to_string(),
                    family: Family::Winograd,
                    template,
                    entity: None,
                    contexts,
                    human_label: None,
                };
                match instance.validate() {
                    Ok(()) => converted.instances.push(instance),
                    Err(e) => converted.skipped.push(format!("line {lineno}: {e}")),
                }
            }
            Err(e) => converted.skipped.push(format!("line {lineno}: {e}")),
        }
    }
    Ok(converted)
}

fn is_spaced_word_char(c: char) -> bool {
    c.is_alphanumeric() && (c as u32) < 0x2E80
}

/// Template from a minimal pair: the single differing span becomes `{P}`.
/// In space-separated text the span is widened to whole words; in
/// unspaced scripts it is widened by characters until both sides are
/// non-empty.
pub fn pair_template(more: &str, less: &str) -> Option<String> {
    let a: Vec<char> = more.trim().chars().collect();
    let b: Vec<char> = less.trim().chars().collect();
    if a == b {
        return None;
    }
    let mut prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let room = a.len().min(b.len()) - prefix;
    let mut suffix = a.iter().rev().zip(b.iter().rev()).take(room).take_while(|(x, y)| x == y).count();
    while (a.len() - prefix - suffix == 0 || b.len() - prefix - suffix == 0) && prefix > 0 {
        prefix -= 1;
    }
    while (a.len() - prefix - suffix == 0 || b.len() - prefix - suffix == 0) && suffix > 0 {
        suffix -= 1;
    }
    while prefix > 0 && is_spaced_word_char(a[prefix - 1]) && is_spaced_word_char(a[prefix]) {
        prefix -= 1;
    }
    while suffix > 0 && is_spaced_word_char(a[a.len() - suffix]) && is_spaced_word_char(a[a.len() - suffix - 1]) {
        suffix -= 1;
    }
    let head: String = a[..prefix].iter().collect();
    let tail: String = a[a.len() - suffix..].iter().collect();
    Some(format!("{head}{PRONOUN_SLOT}{tail}"))
}

/// CrowS-Pairs style CSV with `sent_more`, `sent_less`, `concept` and
/// optional `id` / `human_label` columns.
pub fn convert_crows_pairs<R: Read>(reader: R, family: Family) -> Result<Converted> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Config(format!("csv header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (more, less, concept) = match (col("sent_more"), col("sent_less"), col("concept")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Config(
                "concept-pair CSV needs sent_more, sent_less and concept columns".into(),
            ))
        }
    };
    let id_col = col("id");
    let label_col = col("human_label");
    let mut converted = Converted::default();
    for (idx, row) in rdr.records().enumerate() {
        let lineno = idx + 2;
        let row = row.map_err(|e| Error::Config(format!("csv line {lineno}: {e}")))?;
        let Some(template) = pair_template(&row[more], &row[less]) else {
            converted.skipped.push(format!("line {lineno}: sentences do not differ in one span"));
            continue;
        };
        let instance = TemplateInstance {
            id: id_col.map(|c| row[c].to_string()).unwrap_or_else(|| lineno.to_string()),
            family,
            template,
            entity: None,
            contexts: BTreeMap::from([(ContextKind::Concept, row[concept].trim().to_string())]),
            human_label: label_col.map(|c| row[c].trim().to_string()).filter(|l| !l.is_empty()),
        };
        match instance.validate() {
            Ok(()) => converted.instances.push(instance),
            Err(e) => converted.skipped.push(format!("line {lineno}: {e}")),
        }
    }
    Ok(converted)
}

/// Builds the gender-neutral variant of a GenderLex corpus.
pub fn neutralize_corpus(instances: &[TemplateInstance], entity: NeutralEntity) -> Result<Vec<TemplateInstance>> {
    instances
        .iter()
        .map(|i| {
            let n = neutralize(i, entity)?;
            n.validate()?;
            Ok(n)
        })
        .collect()
}
