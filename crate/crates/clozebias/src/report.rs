//! Bias reports and their JSON, TSV and Markdown renderings.

use std::fmt::Write as _;

use clozebias_core::corpus::Family;
use clozebias_core::embedding::EmbeddingFormat;
use clozebias_core::lm::{Aggregation, SpanNorm};
use clozebias_core::metrics::{AggregateRow, KlDirection, RatioAggregation, WeatStatistic};
use clozebias_core::scoring::{BiasResult, ClozeMode, CombinedFormula, Warning};
use serde::{Deserialize, Serialize};

use crate::config::{ProviderSpec, RunConfig};
use crate::pipeline::Inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Json,
    Tsv,
    Markdown,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Self::Json),
            "tsv" => Some(Self::Tsv),
            "markdown" | "md" => Some(Self::Markdown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub corpus: FileDigest,
    pub family: Family,
    pub embeddings: Vec<FileDigest>,
    pub embedding_format: Option<EmbeddingFormat>,
    pub case_fold: bool,
    pub provider: ProviderSpec,
    pub logprobs: Option<FileDigest>,
    pub model_id: String,
    pub mode: ClozeMode,
    pub aggregation: Aggregation,
    pub span_norm: SpanNorm,
    pub combined: CombinedFormula,
    pub ratio: RatioAggregation,
    pub kl: KlDirection,
    pub weat: WeatStatistic,
    pub lexicon: String,
    pub contexts: Vec<String>,
    pub strict: bool,
}

impl ConfigEcho {
    pub fn new(config: &RunConfig, inputs: &Inputs, model_id: &str) -> Self {
        Self {
            corpus: inputs.corpus.clone(),
            family: config.family,
            embeddings: inputs.tables.iter().map(|t| t.digest.clone()).collect(),
            embedding_format: config.embedding_format,
            case_fold: config.case_fold,
            provider: config.provider.clone(),
            logprobs: inputs.logprobs.clone(),
            model_id: model_id.to_string(),
            mode: config.score.mode,
            aggregation: config.score.aggregation,
            span_norm: config.score.span_norm,
            combined: config.score.combined,
            ratio: config.ratio,
            kl: config.kl,
            weat: config.weat,
            lexicon: config.lexicon.clone(),
            contexts: inputs.contexts.iter().map(|c| c.as_str().to_string()).collect(),
            strict: config.score.strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceBlock {
    pub embedding: String,
    pub context: String,
    pub results: Vec<BiasResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub tool: ToolInfo,
    pub config: ConfigEcho,
    pub rows: Vec<AggregateRow>,
    pub instances: Vec<InstanceBlock>,
    pub warnings: Vec<Warning>,
}

impl BiasReport {
    pub fn new(config: ConfigEcho, rows: Vec<AggregateRow>, instances: Vec<InstanceBlock>, warnings: Vec<Warning>) -> Self {
        Self {
            tool: ToolInfo::default(),
            config,
            rows,
            instances,
            warnings,
        }
    }

    pub fn row(&self, embedding: &str, context: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.embedding == embedding && r.context == context)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Tsv => to_tsv(self),
            OutputFormat::Markdown => to_markdown(self),
        }
    }
}

pub fn to_json(report: &BiasReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

/// One line per aggregate row; ratio columns are the union of labels in
/// first-seen order, `n/a` where a row lacks the label.
pub fn to_tsv(report: &BiasReport) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for row in &report.rows {
        for r in &row.ratios {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
    }
    let mut s = String::from("embedding\tcontext");
    for l in &labels {
        let _ = write!(s, "\t{l}");
    }
    s.push_str("\tkl\tweat\thuman_agreement\tn\n");
    for row in &report.rows {
        let _ = write!(s, "{}\t{}", row.embedding, row.context);
        for l in &labels {
            let ratio = row.ratios.iter().find(|r| r.label == *l).map(|r| r.ratio);
            let _ = write!(s, "\t{}", opt(ratio));
        }
        let _ = writeln!(
            s,
            "\t{:.6}\t{}\t{}\t{}",
            row.kl,
            opt(row.weat),
            opt(row.human_agreement),
            row.n_instances
        );
    }
    s
}

fn bar(ratio: f64) -> String {
    let filled = (ratio.clamp(0.0, 1.0) * 20.0).round() as usize;
    format!("{}{}", "#".repeat(filled), ".".repeat(20 - filled))
}

fn table(s: &mut String, rows: &[&AggregateRow], multi: bool) {
    let labels: Vec<&str> = rows[0].ratios.iter().map(|r| r.label.as_str()).collect();
    let hb = rows.iter().any(|r| r.human_agreement.is_some());
    s.push_str("| context |");
    for l in &labels {
        let _ = write!(s, " {} |", l.to_uppercase());
    }
    s.push_str(" KL | WEAT |");
    if hb {
        s.push_str(" HB% |");
    }
    s.push('\n');
    s.push_str(&"|---".repeat(labels.len() + 3 + usize::from(hb)));
    s.push_str("|\n");
    for row in rows {
        if multi {
            let _ = write!(s, "| {} ({}) |", row.context, row.embedding);
        } else {
            let _ = write!(s, "| {} |", row.context);
        }
        for r in &row.ratios {
            let _ = write!(s, " {:.6} |", r.ratio);
        }
        let _ = write!(s, " {:.6} | {} |", row.kl, opt(row.weat));
        if hb {
            let _ = write!(s, " {} |", row.human_agreement.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", v * 100.0)));
        }
        s.push('\n');
    }
}

fn name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

/// A table per label set, then ratio bars.
pub fn to_markdown(report: &BiasReport) -> String {
    let c = &report.config;
    let mut s = String::from("# Bias report\n\n");
    let _ = writeln!(
        s,
        "corpus `{}` ({}), model `{}`, {} / {}, KL {} in nats\n",
        c.corpus.path,
        c.family,
        c.model_id,
        name(&c.mode),
        name(&c.ratio),
        name(&c.kl)
    );
    let multi = c.embeddings.len() > 1;
    let mut groups: Vec<(Vec<&str>, Vec<&AggregateRow>)> = Vec::new();
    for row in &report.rows {
        let labels: Vec<&str> = row.ratios.iter().map(|r| r.label.as_str()).collect();
        match groups.iter_mut().find(|(l, _)| *l == labels) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((labels, vec![row])),
        }
    }
    for (i, (_, rows)) in groups.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        table(&mut s, rows, multi);
    }
    s.push_str("\n## Ratio bars\n\n```\n");
    let width = report
        .rows
        .iter()
        .map(|r| r.context.len() + if multi { r.embedding.len() + 3 } else { 0 })
        .max()
        .unwrap_or(0);
    for row in &report.rows {
        let name = if multi {
            format!("{} ({})", row.context, row.embedding)
        } else {
            row.context.clone()
        };
        for r in &row.ratios {
            let _ = writeln!(s, "{name:<width$}  {:<8} {} {:.6}", r.label, bar(r.ratio), r.ratio);
        }
    }
    s.push_str("```\n");
    if !report.warnings.is_empty() {
        let _ = writeln!(s, "\n{} warnings; see the JSON report.", report.warnings.len());
    }
    s
}
