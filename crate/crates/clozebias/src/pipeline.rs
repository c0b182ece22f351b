//! End-to-end scoring: load inputs, fetch sentence scores, score every
//! embedding and context, aggregate.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use clozebias_core::corpus::{expand_variants, ContextKind, PronounLexicon, TemplateInstance};
use clozebias_core::embedding::EmbeddingTable;
use clozebias_core::lm::{sentence_id, LogprobProvider, SentenceScore};
use clozebias_core::metrics::{
    bias_ratios, derive_weat_sets, human_agreement, kl_bias, weat, AggregateRow, LabelRatio,
};
use clozebias_core::mock::MockLm;
use clozebias_core::scoring::{
    BiasResult, ClozeMode, ContextSelector, Scorer, Warning, WarningKind,
};
use clozebias_core::ProviderError;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bridge::{CachedProvider, FileStore, HttpOptions, HttpProvider, ManifestLine};
use crate::config::{ProviderSpec, RunConfig};
use crate::corpus_io::parse_corpus;
use crate::embeddings::{load_embeddings, LoadOptions};
use crate::error::{Error, Result, StageExt};
use crate::lexicon::{load_lexicon, Lexicon};
use crate::report::{BiasReport, ConfigEcho, FileDigest, InstanceBlock};

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct NamedTable {
    pub name: String,
    pub digest: FileDigest,
    pub table: EmbeddingTable,
}

/// Everything a run reads from disk.
pub struct Inputs {
    pub corpus: FileDigest,
    pub instances: Vec<TemplateInstance>,
    pub tables: Vec<NamedTable>,
    pub logprobs: Option<FileDigest>,
    pub lexicon: Lexicon,
    pub contexts: Vec<ContextSelector>,
}

fn table_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let unique: HashSet<&String> = stems.iter().collect();
    if unique.len() == stems.len() {
        stems
    } else {
        paths.iter().map(|p| p.display().to_string()).collect()
    }
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let lexicon = load_lexicon(&config.lexicon).stage("lexicon")?;
    let contexts = config.resolved_contexts(&lexicon).stage("config")?;
    let instances = parse_corpus(&config.corpus, config.family).stage("corpus")?;
    if instances.is_empty() {
        return Err(Error::from(clozebias_core::Error::Degenerate(format!(
            "{}: corpus is empty",
            config.corpus.display()
        )))
        .in_stage("corpus"));
    }
    let corpus = FileDigest {
        path: config.corpus.display().to_string(),
        sha256: file_sha256(&config.corpus).stage("corpus")?,
    };
    if config.embeddings.is_empty() {
        return Err(Error::Config("at least one embedding file is required".into()).in_stage("embeddings"));
    }
    let options = LoadOptions {
        format: config.embedding_format,
        case_fold: config.case_fold,
    };
    let names = table_names(&config.embeddings);
    let tables = config
        .embeddings
        .iter()
        .zip(names)
        .map(|(path, name)| {
            let table = load_embeddings(path, options)?;
            Ok(NamedTable {
                name,
                digest: FileDigest {
                    path: path.display().to_string(),
                    sha256: file_sha256(path)?,
                },
                table,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("embeddings")?;
    let logprobs = match &config.provider {
        ProviderSpec::File { path } => Some(FileDigest {
            path: path.display().to_string(),
            sha256: file_sha256(path).stage("provider")?,
        }),
        _ => None,
    };
    Ok(Inputs {
        corpus,
        instances,
        tables,
        logprobs,
        lexicon,
        contexts,
    })
}

/// Every distinct sentence a run will score, in first-seen order, plus
/// the number of repeats dropped.
pub fn needed_sentences(
    instances: &[TemplateInstance],
    lexicon: &Lexicon,
    contexts: &[ContextSelector],
) -> Result<(Vec<String>, usize)> {
    let genders = lexicon.gender_lexicon()?;
    let gendered = contexts.iter().any(|c| *c != ContextSelector::Group);
    let neutral = if contexts.contains(&ContextSelector::Group) {
        let entry = lexicon
            .neutral()
            .ok_or_else(|| Error::Config("group context needs a neutral lexicon entry".into()))?;
        Some(PronounLexicon::new(vec![entry.clone()])?)
    } else {
        None
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut repeats = 0;
    for instance in instances {
        let mut variants = Vec::new();
        if gendered {
            variants.extend(expand_variants(instance, &genders));
        }
        if let Some(n) = &neutral {
            if instance.context(ContextKind::Occupation).is_some() {
                variants.extend(expand_variants(instance, n));
            }
        }
        for v in variants {
            if seen.insert(v.sentence.clone()) {
                out.push(v.sentence);
            } else {
                repeats += 1;
            }
        }
    }
    Ok((out, repeats))
}

/// Sentence manifest for offline scoring.
pub struct Manifest {
    pub lines: Vec<ManifestLine>,
    pub duplicates: usize,
}

pub fn export_sentences(config: &RunConfig, model_id: &str) -> Result<Manifest> {
    let lexicon = load_lexicon(&config.lexicon).stage("lexicon")?;
    let contexts = config.resolved_contexts(&lexicon).stage("config")?;
    let instances = parse_corpus(&config.corpus, config.family).stage("corpus")?;
    let (texts, duplicates) = needed_sentences(&instances, &lexicon, &contexts).stage("corpus")?;
    let lines = texts
        .into_iter()
        .map(|text| ManifestLine {
            sentence_id: sentence_id(model_id, &text),
            text,
        })
        .collect();
    Ok(Manifest { lines, duplicates })
}

/// The configured provider.
pub enum AnyProvider {
    File(FileStore),
    Http(HttpProvider),
    Mock(MockLm),
}

impl AnyProvider {
    pub fn open(spec: &ProviderSpec) -> Result<Self> {
        Ok(match spec {
            ProviderSpec::File { path } => AnyProvider::File(FileStore::open(path)?),
            ProviderSpec::Http {
                url,
                model_id,
                max_in_flight,
                attempts,
            } => AnyProvider::Http(HttpProvider::new(
                url,
                HttpOptions {
                    model_id: model_id.clone(),
                    max_in_flight: *max_in_flight,
                    attempts: *attempts,
                    ..HttpOptions::default()
                },
            )),
            ProviderSpec::Mock { seed, model_id } => AnyProvider::Mock(MockLm::with_model_id(model_id.clone(), *seed)),
        })
    }
}

impl LogprobProvider for AnyProvider {
    fn model_id(&self) -> &str {
        match self {
            AnyProvider::File(p) => p.model_id(),
            AnyProvider::Http(p) => p.model_id(),
            AnyProvider::Mock(p) => p.model_id(),
        }
    }

    fn score(&self, text: &str) -> std::result::Result<SentenceScore, ProviderError> {
        match self {
            AnyProvider::File(p) => p.score(text),
            AnyProvider::Http(p) => p.score(text),
            AnyProvider::Mock(p) => p.score(text),
        }
    }

    fn score_many(&self, texts: &[&str]) -> Vec<std::result::Result<SentenceScore, ProviderError>> {
        match self {
            AnyProvider::File(p) => p.score_many(texts),
            AnyProvider::Http(p) => p.score_many(texts),
            AnyProvider::Mock(p) => p.score_many(texts),
        }
    }
}

pub fn run(config: &RunConfig) -> Result<BiasReport> {
    let inputs = load_inputs(config)?;
    let provider = AnyProvider::open(&config.provider).stage("provider")?;
    run_with_provider(config, &inputs, &provider)
}

fn score_one<P: LogprobProvider + Sync + ?Sized>(
    config: &RunConfig,
    table: &EmbeddingTable,
    provider: &P,
    lexicon: &Lexicon,
    genders: &PronounLexicon,
    selector: ContextSelector,
    instance: &TemplateInstance,
) -> Result<(BiasResult, Vec<Warning>)> {
    let mut warnings = Vec::new();
    let mut options = config.score;
    if options.mode == ClozeMode::ClozeLast && !instance.pronoun_is_final() {
        if options.strict {
            return Err(clozebias_core::Error::Mode(format!(
                "instance {}: cloze-last needs a sentence-final pronoun",
                instance.id
            ))
            .into());
        }
        options.mode = ClozeMode::ClozeAll;
        warnings.push(Warning {
            subject: instance.id.clone(),
            kind: WarningKind::ModeForced,
            message: "pronoun is not sentence-final; scored with cloze-all".to_string(),
        });
    }
    let scorer = Scorer::new(table, provider, options);
    let result = match selector {
        ContextSelector::None => scorer.score_instance(instance, genders, None, &mut warnings)?,
        ContextSelector::Combined => scorer.combined_score(instance, genders, &mut warnings)?,
        ContextSelector::Group => {
            let neutral = lexicon
                .neutral()
                .ok_or_else(|| Error::Config("group context needs a neutral lexicon entry".into()))?;
            scorer.group_score(instance, neutral, &lexicon.groups, &mut warnings)?
        }
        other => scorer.score_instance(instance, genders, other.kind(), &mut warnings)?,
    };
    Ok((result, warnings))
}

fn weat_targets(lexicon: &Lexicon, genders: &PronounLexicon, selector: ContextSelector) -> Option<[(String, Vec<String>); 2]> {
    match selector {
        ContextSelector::None => None,
        ContextSelector::Group => match lexicon.groups.as_slice() {
            [x, y] => Some([(x.label.clone(), x.terms.clone()), (y.label.clone(), y.terms.clone())]),
            _ => None,
        },
        _ => match genders.entries() {
            [x, y] => Some([
                (x.label.clone(), x.embedding_words.clone()),
                (y.label.clone(), y.embedding_words.clone()),
            ]),
            _ => None,
        },
    }
}

fn row_weat(
    config: &RunConfig,
    table: &NamedTable,
    selector: ContextSelector,
    targets: Option<[(String, Vec<String>); 2]>,
    results: &[BiasResult],
    warnings: &mut Vec<Warning>,
) -> Result<Option<f64>> {
    let Some([(xl, xw), (yl, yw)]) = targets else {
        return Ok(None);
    };
    let subject = format!("{}/{}", table.name, selector.as_str());
    let computed = derive_weat_sets(results, &xl, &xw, &yl, &yw).and_then(|sets| weat(&sets, &table.table, config.weat));
    match computed {
        Ok(score) => {
            if !score.dropped.is_empty() {
                warnings.push(Warning {
                    subject,
                    kind: WarningKind::Weat,
                    message: format!("dropped out-of-vocabulary words {}", score.dropped.join(" ")),
                });
            }
            Ok(Some(score.value))
        }
        Err(e) if config.score.strict => Err(e.into()),
        Err(e) => {
            warnings.push(Warning {
                subject,
                kind: WarningKind::Weat,
                message: format!("WEAT not computed: {e}"),
            });
            Ok(None)
        }
    }
}

/// Scores with an explicit provider; the provider is wrapped in a cache and
/// every needed sentence is fetched up front.
pub fn run_with_provider<P: LogprobProvider + Sync + ?Sized>(
    config: &RunConfig,
    inputs: &Inputs,
    provider: &P,
) -> Result<BiasReport> {
    let cached = CachedProvider::new(provider);
    let (texts, _) = needed_sentences(&inputs.instances, &inputs.lexicon, &inputs.contexts).stage("scoring")?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    cached.prefetch(&refs).stage("provider")?;

    let genders = inputs.lexicon.gender_lexicon().stage("lexicon")?;
    let human: BTreeMap<String, String> = inputs
        .instances
        .iter()
        .filter_map(|i| i.human_label.clone().map(|l| (i.id.clone(), l)))
        .collect();

    let mut warnings = Vec::new();
    for t in &inputs.tables {
        if t.table.duplicates() > 0 {
            warnings.push(Warning {
                subject: t.name.clone(),
                kind: WarningKind::DuplicateEmbedding,
                message: format!("{} duplicate words; first vector kept", t.table.duplicates()),
            });
        }
    }

    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for table in &inputs.tables {
        for &selector in &inputs.contexts {
            let scored: Vec<(BiasResult, Vec<Warning>)> = inputs
                .instances
                .par_iter()
                .filter(|i| selector != ContextSelector::Group || i.context(ContextKind::Occupation).is_some())
                .map(|i| score_one(config, &table.table, &cached, &inputs.lexicon, &genders, selector, i))
                .collect::<Result<_>>()
                .stage("scoring")?;
            let mut results = Vec::with_capacity(scored.len());
            for (r, w) in scored {
                results.push(r);
                warnings.extend(w);
            }
            if results.is_empty() {
                continue;
            }
            let ratios = bias_ratios(&results, config.ratio).stage("metrics")?;
            let kl = kl_bias(&results, config.kl).stage("metrics")?;
            for id in &kl.smoothed {
                warnings.push(Warning {
                    subject: id.clone(),
                    kind: WarningKind::Smoothing,
                    message: format!("KL smoothed zero components ({}/{})", table.name, selector.as_str()),
                });
            }
            let targets = weat_targets(&inputs.lexicon, &genders, selector);
            let weat_value = row_weat(config, table, selector, targets, &results, &mut warnings).stage("metrics")?;
            let hb = if selector != ContextSelector::Group && results.iter().any(|r| human.contains_key(&r.instance_id)) {
                Some(human_agreement(&results, &human).stage("metrics")?)
            } else {
                None
            };
            rows.push(AggregateRow {
                context: selector.as_str().to_string(),
                embedding: table.name.clone(),
                ratios: ratios
                    .into_iter()
                    .map(|(label, ratio)| LabelRatio { label, ratio })
                    .collect(),
                kl: kl.value,
                weat: weat_value,
                human_agreement: hb,
                n_instances: results.len(),
                aggregation: config.ratio,
            });
            blocks.push(InstanceBlock {
                embedding: table.name.clone(),
                context: selector.as_str().to_string(),
                results,
            });
        }
    }
    warnings.sort();
    warnings.dedup();
    for w in &warnings {
        log::warn!("{}: {}", w.subject, w.message);
    }
    Ok(BiasReport::new(
        ConfigEcho::new(config, inputs, cached.model_id()),
        rows,
        blocks,
        warnings,
    ))
}
