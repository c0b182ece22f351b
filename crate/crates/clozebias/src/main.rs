use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clozebias::bridge::record::{read_logprob_file, read_manifest, write_logprob_file};
use clozebias::bridge::ENV_URL;
use clozebias::config::{parse_contexts, ProviderSpec, RunConfig};
use clozebias::convert::{convert_crows_pairs, convert_winobias, neutralize_corpus, Converted};
use clozebias::corpus_io::{parse_corpus, write_corpus};
use clozebias::embeddings::{load_embeddings, LoadOptions};
use clozebias::error::{Error, Result, StageExt};
use clozebias::pipeline::{export_sentences, run};
use clozebias::report::OutputFormat;
use clozebias_core::corpus::{Family, NeutralEntity};
use clozebias_core::embedding::EmbeddingFormat;
use clozebias_core::lm::Aggregation;
use clozebias_core::metrics::{weat, KlDirection, RatioAggregation, WeatSets, WeatStatistic};
use clozebias_core::mock::MockLm;
use clozebias_core::scoring::{ClozeMode, CombinedFormula};

#[derive(Parser)]
#[command(name = "clozebias", version, about = "Cloze-probability gender and social bias measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a corpus and write a bias report.
    Score(ScoreArgs),
    /// Word embedding association test on explicit word sets.
    Weat(WeatArgs),
    /// Convert external datasets into template corpora.
    Convert(ConvertArgs),
    /// Write every sentence a run needs as a JSONL manifest.
    ExportSentences(ExportArgs),
    /// Score a manifest with the deterministic mock model.
    MockLogprobs(MockArgs),
    /// Check logprob JSONL files.
    ValidateLogprobs(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Genderlex,
    GenderlexNeutral,
    Winograd,
    CrowsPairs,
    JpPairs,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Genderlex => Family::Genderlex,
            FamilyArg::GenderlexNeutral => Family::GenderlexNeutral,
            FamilyArg::Winograd => Family::Winograd,
            FamilyArg::CrowsPairs => Family::CrowsPairs,
            FamilyArg::JpPairs => Family::JpPairs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Last,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    MeanProb,
    GeoMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum RatioArg {
    Mean,
    Wins,
}

#[derive(Clone, Copy, ValueEnum)]
enum KlArg {
    Update,
    Pair,
    Reverse,
    Jeffreys,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombinedArg {
    Mean,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingFormatArg {
    Word2vec,
    Glove,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntityArg {
    Someone,
    Person,
}

impl From<EntityArg> for NeutralEntity {
    fn from(e: EntityArg) -> Self {
        match e {
            EntityArg::Someone => NeutralEntity::Someone,
            EntityArg::Person => NeutralEntity::Person,
        }
    }
}

#[derive(Args)]
struct CorpusArgs {
    /// Template corpus (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "genderlex")]
    family: FamilyArg,
    /// `builtin:en`, `builtin:en-neutral`, `builtin:ja`, or a TOML/JSON file.
    #[arg(long, default_value = "builtin:en")]
    lexicon: String,
    /// Comma-separated: none,occupation,noun,verb,concept,combined,group.
    #[arg(long)]
    contexts: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Embedding file; repeat to compare several.
    #[arg(long = "embeddings", required = true)]
    embeddings: Vec<PathBuf>,
    #[arg(long, value_enum)]
    embedding_format: Option<EmbeddingFormatArg>,
    /// Keep embedding lookups case sensitive.
    #[arg(long)]
    no_case_fold: bool,
    /// Precomputed logprob JSONL.
    #[arg(long, conflicts_with_all = ["server", "mock"])]
    logprobs: Option<PathBuf>,
    /// Logprob server base URL.
    #[arg(long, env = ENV_URL, conflicts_with = "mock")]
    server: Option<String>,
    /// Deterministic mock language model.
    #[arg(long)]
    mock: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model id sent to the server or stamped on mock scores.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 3)]
    attempts: u32,
    #[arg(long, value_enum, default_value = "last")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "mean-prob")]
    agg: AggArg,
    #[arg(long, value_enum, default_value = "mean")]
    ratio: RatioArg,
    #[arg(long, value_enum, default_value = "update")]
    kl: KlArg,
    #[arg(long, value_enum, default_value = "mean")]
    combined: CombinedArg,
    /// Report the WEAT effect size instead of the raw statistic.
    #[arg(long)]
    effect_size: bool,
    /// Treat underflow, forced modes and WEAT failures as errors.
    #[arg(long)]
    strict: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Args)]
struct WeatArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_enum)]
    embedding_format: Option<EmbeddingFormatArg>,
    /// Comma-separated target words.
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    /// Comma-separated attribute words.
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    effect_size: bool,
    #[arg(long)]
    no_case_fold: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    /// TSV: bracketed sentence, occupation.
    Winobias,
    /// CSV with sent_more, sent_less, concept.
    CrowsPairs,
    /// Same CSV layout, Japanese pairs.
    JpPairs,
    /// GenderLex JSONL to its gender-neutral variant.
    Genderlex,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    from: SourceArg,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Replacement for non-occupation entities and neutralized occupations.
    #[arg(long, value_enum, default_value = "someone")]
    entity: EntityArg,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Model id used to derive sentence ids.
    #[arg(long, default_value = "")]
    model_id: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MockArgs {
    /// Manifest JSONL from export-sentences.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = MockLm::DEFAULT_MODEL_ID)]
    model_id: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn embedding_format(f: Option<EmbeddingFormatArg>) -> Option<EmbeddingFormat> {
    f.map(|f| match f {
        EmbeddingFormatArg::Word2vec => EmbeddingFormat::Word2vecText,
        EmbeddingFormatArg::Glove => EmbeddingFormat::GloveText,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_all(path: Option<&Path>, data: &[u8]) -> Result<()> {
    let mut out = output(path)?;
    let target = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    out.write_all(data).and_then(|()| out.flush()).map_err(|e| Error::io(target, e))
}

fn run_config(corpus: &CorpusArgs, embeddings: Vec<PathBuf>, provider: ProviderSpec) -> Result<RunConfig> {
    let mut config = RunConfig::new(corpus.corpus.clone(), corpus.family.into(), embeddings, provider);
    config.lexicon = corpus.lexicon.clone();
    config.contexts = corpus.contexts.as_deref().map(parse_contexts).transpose()?;
    Ok(config)
}

fn score(args: ScoreArgs) -> Result<()> {
    let provider = if let Some(path) = args.logprobs {
        ProviderSpec::File { path }
    } else if args.mock {
        ProviderSpec::Mock {
            seed: args.seed,
            model_id: args.model_id.unwrap_or_else(|| MockLm::DEFAULT_MODEL_ID.to_string()),
        }
    } else if let Some(url) = args.server {
        ProviderSpec::Http {
            url,
            model_id: args.model_id.unwrap_or_else(|| "default".to_string()),
            max_in_flight: args.max_in_flight,
            attempts: args.attempts,
        }
    } else {
        return Err(Error::Config(format!("choose --logprobs, --server (or {ENV_URL}), or --mock")));
    };
    let mut config = run_config(&args.corpus, args.embeddings, provider).stage("config")?;
    config.embedding_format = embedding_format(args.embedding_format);
    config.case_fold = !args.no_case_fold;
    config.score.mode = match args.mode {
        ModeArg::Last => ClozeMode::ClozeLast,
        ModeArg::All => ClozeMode::ClozeAll,
    };
    config.score.aggregation = match args.agg {
        AggArg::MeanProb => Aggregation::MeanProb,
        AggArg::GeoMean => Aggregation::GeoMean,
    };
    config.score.combined = match args.combined {
        CombinedArg::Mean => CombinedFormula::Mean,
        CombinedArg::Sum => CombinedFormula::Sum,
    };
    config.score.strict = args.strict;
    config.ratio = match args.ratio {
        RatioArg::Mean => RatioAggregation::MeanRatio,
        RatioArg::Wins => RatioAggregation::WinCount,
    };
    config.kl = match args.kl {
        KlArg::Update => KlDirection::Update,
        KlArg::Pair => KlDirection::Pair,
        KlArg::Reverse => KlDirection::Reverse,
        KlArg::Jeffreys => KlDirection::Jeffreys,
    };
    if args.effect_size {
        config.weat = WeatStatistic::EffectSize;
    }
    let report = run(&config)?;
    let format = match args.format {
        FormatArg::Json => OutputFormat::Json,
        FormatArg::Tsv => OutputFormat::Tsv,
        FormatArg::Markdown => OutputFormat::Markdown,
    };
    write_all(args.out.as_deref(), report.render(format).as_bytes()).stage("output")
}

fn words(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect()
}

fn weat_cmd(args: WeatArgs) -> Result<()> {
    let table = load_embeddings(
        &args.embeddings,
        LoadOptions {
            format: embedding_format(args.embedding_format),
            case_fold: !args.no_case_fold,
        },
    )
    .stage("embeddings")?;
    let sets = WeatSets {
        x: words(&args.x),
        y: words(&args.y),
        a: words(&args.a),
        b: words(&args.b),
    };
    let statistic = if args.effect_size {
        WeatStatistic::EffectSize
    } else {
        WeatStatistic::Raw
    };
    let score = weat(&sets, &table, statistic).stage("metrics")?;
    if !score.dropped.is_empty() {
        log::warn!("dropped out-of-vocabulary words: {}", score.dropped.join(" "));
    }
    println!("{:.6}", score.value);
    Ok(())
}

fn convert(args: ConvertArgs) -> Result<()> {
    let open = || File::open(&args.input).map_err(|e| Error::io(&args.input, e));
    let converted = match args.from {
        SourceArg::Winobias => convert_winobias(BufReader::new(open()?), &args.input, args.entity.into())?,
        SourceArg::CrowsPairs => convert_crows_pairs(open()?, Family::CrowsPairs)?,
        SourceArg::JpPairs => convert_crows_pairs(open()?, Family::JpPairs)?,
        SourceArg::Genderlex => {
            let instances = parse_corpus(&args.input, Family::Genderlex)?;
            Converted {
                instances: neutralize_corpus(&instances, args.entity.into())?,
                skipped: Vec::new(),
            }
        }
    };
    for s in &converted.skipped {
        log::warn!("skipped {s}");
    }
    let mut buf = Vec::new();
    write_corpus(&mut buf, &converted.instances).map_err(|e| Error::io(&args.input, e))?;
    write_all(args.out.as_deref(), &buf)?;
    eprintln!("{} converted, {} skipped", converted.instances.len(), converted.skipped.len());
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let config = run_config(&args.corpus, Vec::new(), ProviderSpec::mock()).stage("config")?;
    let manifest = export_sentences(&config, &args.model_id)?;
    let mut buf = String::new();
    for line in &manifest.lines {
        buf.push_str(&serde_json::to_string(line).expect("manifest line serializes"));
        buf.push('\n');
    }
    write_all(args.out.as_deref(), buf.as_bytes())?;
    eprintln!("{} sentences, {} duplicates removed", manifest.lines.len(), manifest.duplicates);
    Ok(())
}

fn mock_logprobs(args: MockArgs) -> Result<()> {
    let file = File::open(&args.manifest).map_err(|e| Error::io(&args.manifest, e))?;
    let manifest = read_manifest(BufReader::new(file), &args.manifest)?;
    let lm = MockLm::with_model_id(args.model_id, args.seed);
    let scores: Vec<_> = manifest.iter().map(|m| lm.score_text(&m.text)).collect();
    let mut buf = Vec::new();
    write_logprob_file(&mut buf, &scores).map_err(|e| Error::io(&args.manifest, e))?;
    write_all(args.out.as_deref(), &buf)
}

fn validate(args: ValidateArgs) -> Result<()> {
    for path in &args.files {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let scores = read_logprob_file(BufReader::new(file), path)?;
        println!("{}: {} records ok", path.display(), scores.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Score(a) => score(a),
        Command::Weat(a) => weat_cmd(a),
        Command::Convert(a) => convert(a),
        Command::ExportSentences(a) => export(a),
        Command::MockLogprobs(a) => mock_logprobs(a),
        Command::ValidateLogprobs(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
