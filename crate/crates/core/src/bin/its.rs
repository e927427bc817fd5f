//! Pipeline driver: curate corpora, generate personas, build dataset
//! variants, run greedy evaluations, grade, and assemble reports.
//!
//! Settings resolve flags over config file over built-in defaults; the
//! effective configuration is logged at startup and its hash is embedded in
//! every artifact. Completed subcommands are safe to re-run: endpoint work
//! replays from the request ledger and outputs are rewritten byte-for-byte.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use its::client::{Ledger, LlmClient};
use its::config::RunConfig;
use its::corpus::{self, CorpusFilter, RecordFormat, SampleSpec, SourceRecord};
use its::error::{Error, Result};
use its::grader::{grade_run_with, load_benchmark, BenchmarkSet, BoxSelection};
use its::inference::{read_completions, run_eval, EvalRun};
use its::metrics::{
    assemble_matrix, load_vote_spec, majority_vote, parse_report_json, read_grade_file,
    render_json, render_markdown, summarize, write_grade_file, ComparisonRow, Report,
    StrategyMatrix, VoteOutcome,
};
use its::persona::{
    save_personas, DomainPool, FilePersonaEngine, Persona, PersonaEngine, PersonaGenerator,
    PersonaRecord, PersonasFileMeta, QueryRef, Strategy, TemplateSet,
};
use its::variant::{
    emit_manifest, read_variant, write_variant, ManifestOverrides, VariantBuilder, VariantSource,
};

#[derive(Parser)]
#[command(
    name = "its",
    version,
    about = "Persona-augmented dataset curation, greedy evaluation, and reporting"
)]
struct Cli {
    /// Run configuration file (TOML). Defaults to its.toml when present;
    /// built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a raw record file by supervision markers and sample a subset.
    Ingest(IngestArgs),
    /// Generate personas for a base corpus or benchmark under one strategy.
    Personas(PersonasArgs),
    /// Build a dataset variant by splicing personas into queries.
    Build(BuildArgs),
    /// Emit the training manifest for a train variant.
    Manifest(ManifestArgs),
    /// Run a greedy evaluation of a test variant against an endpoint.
    Eval(EvalArgs),
    /// Grade a completions file against a benchmark gold file.
    Grade(GradeArgs),
    /// Assemble grade summaries into a train-test strategy matrix.
    Matrix(MatrixArgs),
    /// Majority-vote three graded runs question by question.
    Vote(VoteArgs),
    /// Render the markdown report and its JSON mirror.
    Report(ReportArgs),
    /// Dry-run the configuration: paths, templates, keys, reachability.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Raw record file to read.
    #[arg(long)]
    input: PathBuf,
    /// Input format: ndjson (default) or json.
    #[arg(long, default_value = "ndjson")]
    format: String,
    /// Curated corpus to write.
    #[arg(long)]
    output: PathBuf,
    /// Keep only this many records, drawn by --sample-mode.
    #[arg(long)]
    count: Option<usize>,
    /// uniform (seeded, without replacement) or prefix.
    #[arg(long, default_value = "uniform")]
    sample_mode: String,
    /// Skip the supervision-marker filter entirely.
    #[arg(long)]
    keep_all: bool,
    /// Override the configured marker substrings (repeatable).
    #[arg(long = "marker")]
    markers: Vec<String>,
}

#[derive(Args)]
struct PersonasArgs {
    /// Named base corpus from the config to generate personas for.
    #[arg(long, conflicts_with = "benchmark")]
    base: Option<String>,
    /// Named benchmark from the config to generate personas for.
    #[arg(long)]
    benchmark: Option<String>,
    /// Persona strategy: S, D, or R (N takes no personas).
    #[arg(long)]
    strategy: String,
    /// Personas file to write.
    #[arg(long)]
    output: PathBuf,
    /// Domain pool file (strategy R): loaded if present, generated and
    /// saved otherwise. Defaults to <output_root>/domain_pool.json.
    #[arg(long)]
    domain_pool: Option<PathBuf>,
    /// Request ledger path. Defaults to <output_root>/ledgers/….
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    /// Named base corpus (train split) from the config.
    #[arg(long, conflicts_with = "benchmark")]
    base: Option<String>,
    /// Named benchmark (test split) from the config.
    #[arg(long)]
    benchmark: Option<String>,
    /// Strategy to apply: N, S, D, or R.
    #[arg(long)]
    strategy: String,
    /// Personas file produced by `its personas` (required unless N).
    #[arg(long)]
    personas: Option<PathBuf>,
    /// Variant file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ManifestArgs {
    /// Train variant the manifest points at.
    #[arg(long)]
    variant: PathBuf,
    /// Base model to fine-tune.
    #[arg(long)]
    base_model: String,
    /// Manifest file to write (TOML).
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    update_steps: Option<u32>,
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    max_token_length: Option<u32>,
    #[arg(long)]
    packing: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    /// Test variant to evaluate.
    #[arg(long)]
    variant: PathBuf,
    /// Named eval target (endpoint) from the config.
    #[arg(long)]
    target: String,
    /// Train strategy of the model behind the endpoint; required unless
    /// the target declares one.
    #[arg(long)]
    train_strategy: Option<String>,
    /// Completions file to write.
    #[arg(long)]
    output: PathBuf,
    /// Request ledger path. Defaults to <output_root>/ledgers/<run_id>.jsonl.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct GradeArgs {
    /// Completions file from `its eval`.
    #[arg(long)]
    completions: PathBuf,
    /// Named benchmark from the config.
    #[arg(long, conflicts_with = "benchmark_path")]
    benchmark: Option<String>,
    /// Benchmark gold file given directly by path.
    #[arg(long)]
    benchmark_path: Option<PathBuf>,
    /// Grade file to write.
    #[arg(long)]
    output: PathBuf,
    /// Which well-balanced box to read the answer from: last (default)
    /// or first.
    #[arg(long, default_value = "last")]
    box_pick: String,
}

#[derive(Args)]
struct MatrixArgs {
    /// Label for this matrix, normally the base dataset name.
    #[arg(long)]
    label: String,
    /// Grade files to place (repeatable).
    #[arg(long = "grades", required = true)]
    grades: Vec<PathBuf>,
    /// Matrix file to write (JSON).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VoteArgs {
    /// Vote spec file: {"members": [run_id × 3], "tie_break": "first"}.
    #[arg(long)]
    spec: PathBuf,
    /// The three members' grade files.
    #[arg(long = "grades", num_args = 1, required = true)]
    grades: Vec<PathBuf>,
    /// Vote outcome file to write (JSON).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Matrix files from `its matrix` (repeatable).
    #[arg(long = "matrix")]
    matrices: Vec<PathBuf>,
    /// Vote files from `its vote` (repeatable).
    #[arg(long = "vote")]
    votes: Vec<PathBuf>,
    /// JSON array of comparison rows to include verbatim.
    #[arg(long)]
    comparisons: Option<PathBuf>,
    /// Benchmark column order, comma-separated. Defaults to name order.
    #[arg(long)]
    benchmarks: Option<String>,
    /// Directory for report.md and report.json.
    /// Defaults to <output_root>/report.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Skip endpoint reachability probes.
    #[arg(long)]
    offline: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for line in rendered.lines().skip(1) {
                eprintln!("  {line}");
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is_usage() { "usage" } else { "runtime" };
            let text = e.to_string();
            let mut lines = text.lines();
            eprintln!("error[{kind}]: {}", lines.next().unwrap_or("unknown error"));
            for line in lines {
                eprintln!("  {line}");
            }
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

/// Effective settings for one invocation.
struct Ctx {
    config: RunConfig,
    config_hash: String,
    seed: u64,
}

fn run(cli: Cli) -> Result<()> {
    let (config, config_desc) = match &cli.config {
        Some(path) => {
            let config = RunConfig::load(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(format!("cannot read {}: {e}", path.display())),
                other => other,
            })?;
            (config, format!("{}", path.display()))
        }
        None => {
            let default = Path::new("its.toml");
            if default.exists() {
                (RunConfig::load(default)?, "its.toml".to_string())
            } else {
                (RunConfig::default(), "built-in defaults".to_string())
            }
        }
    };
    let (seed, seed_source) = match cli.seed {
        Some(seed) => (seed, "--seed"),
        None => (config.seed, "config"),
    };
    let mut config = config;
    config.seed = seed;
    let config_hash = config.config_hash();
    eprintln!("its: config {config_desc} (hash {config_hash})");
    eprintln!("its: seed {seed} (from {seed_source})");

    let ctx = Ctx {
        config,
        config_hash,
        seed,
    };
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, args),
        Command::Personas(args) => cmd_personas(&ctx, args),
        Command::Build(args) => cmd_build(&ctx, args),
        Command::Manifest(args) => cmd_manifest(&ctx, args),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::Grade(args) => cmd_grade(&ctx, args),
        Command::Matrix(args) => cmd_matrix(&ctx, args),
        Command::Vote(args) => cmd_vote(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
        Command::Validate(args) => cmd_validate(&ctx, args),
    }
}

// ---------------------------------------------------------------------------
// Artifact plumbing
// ---------------------------------------------------------------------------

/// Provenance header embedded in emitted artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArtifactMeta {
    config_hash: String,
    seed: u64,
}

impl ArtifactMeta {
    fn of(ctx: &Ctx) -> ArtifactMeta {
        ArtifactMeta {
            config_hash: ctx.config_hash.clone(),
            seed: ctx.seed,
        }
    }
}

/// Write atomically, but only if the content actually changed; returns
/// whether the file was (re)written.
fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(true)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn wrote(changed: bool) -> &'static str {
    if changed {
        "wrote"
    } else {
        "unchanged"
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    s.parse()
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IngestMeta<'a> {
    config_hash: &'a str,
    seed: u64,
    source: String,
    examined: usize,
    kept: usize,
    markers: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_mode: Option<String>,
}

fn cmd_ingest(ctx: &Ctx, args: IngestArgs) -> Result<()> {
    let format: RecordFormat = args.format.parse()?;
    let records = corpus::load_records(&args.input, format)?;
    let examined = records.len();

    let markers = if args.markers.is_empty() {
        ctx.config.corpus.required_substrings.clone()
    } else {
        args.markers.clone()
    };
    let (kept, stats) = if args.keep_all {
        let n = records.len();
        (
            records,
            corpus::FilterStats {
                examined: n,
                kept: n,
                dropped: 0,
            },
        )
    } else {
        corpus::filter_records(
            &records,
            &CorpusFilter {
                required_substrings: markers.clone(),
            },
        )
    };

    let selected = match args.count {
        Some(count) => {
            let spec = SampleSpec {
                seed: ctx.seed,
                count,
                mode: args.sample_mode.parse()?,
            };
            corpus::sample_records(&kept, &spec)?
        }
        None => kept,
    };

    let meta = IngestMeta {
        config_hash: &ctx.config_hash,
        seed: ctx.seed,
        source: args.input.display().to_string(),
        examined,
        kept: stats.kept,
        markers,
        sampled: args.count,
        sample_mode: args.count.map(|_| args.sample_mode.clone()),
    };
    let mut bytes = Vec::new();
    serde_json::to_writer(&mut bytes, &serde_json::json!({ "meta": meta }))
        .expect("meta serializes");
    bytes.push(b'\n');
    for record in &selected {
        serde_json::to_writer(&mut bytes, record).expect("record serializes");
        bytes.push(b'\n');
    }
    let changed = write_if_changed(&args.output, &bytes)?;
    println!(
        "ingest: examined {examined}, kept {}, selected {}; {} {}",
        stats.kept,
        selected.len(),
        wrote(changed),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// personas
// ---------------------------------------------------------------------------

/// Owned (id, query) pairs for whichever source was named.
fn load_queries(ctx: &Ctx, base: &Option<String>, benchmark: &Option<String>) -> Result<(String, Vec<(String, String)>)> {
    match (base, benchmark) {
        (Some(name), None) => {
            let section = ctx.config.base(name)?;
            let format: RecordFormat = section.format.parse()?;
            let records = corpus::load_records(&section.path, format)?;
            Ok((
                name.clone(),
                records
                    .into_iter()
                    .map(|r| (r.id, r.query))
                    .collect(),
            ))
        }
        (None, Some(name)) => {
            let section = ctx.config.benchmark(name)?;
            let bench = load_benchmark(&section.path)?;
            Ok((
                name.clone(),
                bench
                    .questions
                    .into_iter()
                    .map(|q| (q.query_id, q.query))
                    .collect(),
            ))
        }
        _ => Err(Error::Config(
            "exactly one of --base or --benchmark is required".to_string(),
        )),
    }
}

fn generator_client(ctx: &Ctx, ledger_path: &Path) -> Result<(LlmClient, String)> {
    let section = ctx.config.generator()?;
    ensure_parent(ledger_path)?;
    let ledger = Ledger::open(ledger_path)?;
    let client = LlmClient::new(section.endpoint(), ctx.config.retry.policy(), ledger)?;
    Ok((client, section.model_name.clone()))
}

fn cmd_personas(ctx: &Ctx, args: PersonasArgs) -> Result<()> {
    let strategy = parse_strategy(&args.strategy)?;
    if strategy == Strategy::N {
        return Err(Error::Config(
            "strategy N uses no personas; build the variant directly".to_string(),
        ));
    }
    let (name, queries) = load_queries(ctx, &args.base, &args.benchmark)?;
    let ledger_path = args.ledger.clone().unwrap_or_else(|| {
        ctx.config
            .output_root
            .join("ledgers")
            .join(format!("personas_{name}_{strategy}.jsonl"))
    });
    let (client, model_name) = generator_client(ctx, &ledger_path)?;
    let templates = TemplateSet::load(&ctx.config.templates_dir)?;
    let mut generator = PersonaGenerator::new(&client, &templates);
    generator.temperature = ctx.config.persona.temperature;
    generator.max_tokens = ctx.config.persona.max_tokens;

    let pool: Vec<String> = if strategy == Strategy::R {
        let pool_path = args
            .domain_pool
            .clone()
            .unwrap_or_else(|| ctx.config.output_root.join("domain_pool.json"));
        if pool_path.exists() {
            let pool = DomainPool::load(&pool_path)?;
            eprintln!(
                "personas: loaded {} domain(s) from {}",
                pool.domains.len(),
                pool_path.display()
            );
            pool.domains
        } else {
            let domains = generator.generate_domain_pool(ctx.config.persona.domain_pool_size)?;
            ensure_parent(&pool_path)?;
            let pool = DomainPool {
                seed: ctx.seed,
                config_hash: ctx.config_hash.clone(),
                domains,
            };
            pool.save(&pool_path)?;
            eprintln!(
                "personas: generated {} domain(s) into {}",
                pool.domains.len(),
                pool_path.display()
            );
            pool.domains
        }
    } else {
        Vec::new()
    };

    let refs: Vec<QueryRef<'_>> = queries
        .iter()
        .map(|(id, query)| QueryRef { id, query })
        .collect();
    let results = generator.personas_for(&refs, strategy, &pool, ctx.seed);
    let failures: Vec<(String, String)> = results
        .iter()
        .zip(&refs)
        .filter_map(|(r, q)| r.as_ref().err().map(|e| (q.id.to_string(), e.to_string())))
        .collect();
    if !failures.is_empty() {
        let summary = failures
            .iter()
            .map(|(id, _)| id.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::VariantBuild {
            count: failures.len(),
            summary,
            failures,
        });
    }

    let template_hash = templates.generator_for(strategy)?.hash.clone();
    let records: Vec<PersonaRecord> = results
        .into_iter()
        .map(|r| {
            let persona: Persona = r.expect("no failures");
            PersonaRecord {
                query_id: persona.source_query_id,
                strategy,
                domain: persona.domain,
                persona_text: persona.text,
                template_hash: template_hash.clone(),
            }
        })
        .collect();
    let meta = PersonasFileMeta {
        base_name: name.clone(),
        strategy,
        seed: ctx.seed,
        config_hash: ctx.config_hash.clone(),
        generator_model: Some(model_name),
        template_hash,
    };
    ensure_parent(&args.output)?;
    save_personas(&args.output, &meta, &records)?;
    println!(
        "personas: {} persona(s) ({strategy}) for {name}; wrote {}",
        records.len(),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

/// Build never generates personas itself; strategies other than N read them
/// from a personas file, so builds are offline and reproducible.
struct NoPersonas;

impl PersonaEngine for NoPersonas {
    fn personas_for(&self, queries: &[QueryRef<'_>], _strategy: Strategy) -> Vec<Result<Persona>> {
        queries
            .iter()
            .map(|_| {
                Err(Error::Config(
                    "this build expects no persona generation".to_string(),
                ))
            })
            .collect()
    }
}

fn cmd_build(ctx: &Ctx, args: BuildArgs) -> Result<()> {
    let strategy = parse_strategy(&args.strategy)?;
    let templates = TemplateSet::load(&ctx.config.templates_dir)?;

    enum Loaded {
        Train(Vec<SourceRecord>),
        Test(BenchmarkSet),
    }
    let (name, loaded) = match (&args.base, &args.benchmark) {
        (Some(name), None) => {
            let section = ctx.config.base(name)?;
            let format: RecordFormat = section.format.parse()?;
            (name.clone(), Loaded::Train(corpus::load_records(&section.path, format)?))
        }
        (None, Some(name)) => {
            let section = ctx.config.benchmark(name)?;
            (name.clone(), Loaded::Test(load_benchmark(&section.path)?))
        }
        _ => {
            return Err(Error::Config(
                "exactly one of --base or --benchmark is required".to_string(),
            ))
        }
    };

    let file_engine: Option<FilePersonaEngine> = match (&args.personas, strategy) {
        (_, Strategy::N) => None,
        (Some(path), _) => Some(FilePersonaEngine::load(path)?),
        (None, _) => {
            return Err(Error::Config(format!(
                "strategy {strategy} needs --personas (generate them with `its personas`)"
            )))
        }
    };
    let generator_model = file_engine
        .as_ref()
        .and_then(|e| e.meta().generator_model.clone());
    let engine: &dyn PersonaEngine = match &file_engine {
        Some(engine) => engine,
        None => &NoPersonas,
    };

    let builder = VariantBuilder {
        base_name: &name,
        strategy,
        seed: ctx.seed,
        config_hash: &ctx.config_hash,
        generator_model: generator_model.as_deref(),
        templates: &templates,
    };
    let variant = match &loaded {
        Loaded::Train(records) => builder.build(&VariantSource::Train(records), engine)?,
        Loaded::Test(bench) => builder.build(&VariantSource::Test(bench), engine)?,
    };
    ensure_parent(&args.output)?;
    let changed = write_variant(&args.output, &variant)?;
    println!(
        "build: {name} {strategy} {} with {} record(s); {} {}",
        variant.meta.split,
        variant.meta.size,
        wrote(changed),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

fn cmd_manifest(ctx: &Ctx, args: ManifestArgs) -> Result<()> {
    let _ = ctx;
    let variant = read_variant(&args.variant)?;
    let overrides = ManifestOverrides {
        update_steps: args.update_steps,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        schedule: args.schedule.clone(),
        max_token_length: args.max_token_length,
        packing: args.packing,
    };
    let manifest = emit_manifest(
        &variant.meta,
        &args.variant.display().to_string(),
        &args.base_model,
        &overrides,
    )?;
    for line in &manifest.overrides_applied {
        eprintln!("manifest: override {line}");
    }
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Invalid(format!("manifest serialization: {e}")))?;
    let changed = write_if_changed(&args.output, text.as_bytes())?;
    println!(
        "manifest: {} for {}; {} {}",
        args.base_model,
        variant.meta.base_name,
        wrote(changed),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(ctx: &Ctx, args: EvalArgs) -> Result<()> {
    let variant = read_variant(&args.variant)?;
    let target = ctx.config.eval_target(&args.target)?;
    let train_strategy = match (&args.train_strategy, target.train_strategy) {
        (Some(s), _) => parse_strategy(s)?,
        (None, Some(s)) => s,
        (None, None) => {
            return Err(Error::Config(format!(
                "eval target \"{}\" declares no train_strategy; pass --train-strategy",
                args.target
            )))
        }
    };
    let endpoint = target.endpoint.endpoint();
    let mut run = EvalRun::new(
        &endpoint,
        &variant,
        &args.variant.display().to_string(),
        train_strategy,
        &ctx.config_hash,
    )?;
    run.decode.max_tokens = ctx.config.eval.max_tokens;

    let ledger_path = args.ledger.clone().unwrap_or_else(|| {
        ctx.config
            .output_root
            .join("ledgers")
            .join(format!("{}.jsonl", run.run_id))
    });
    ensure_parent(&ledger_path)?;
    let ledger = Ledger::open(&ledger_path)?;
    let client = LlmClient::new(endpoint, ctx.config.retry.policy(), ledger)?;

    ensure_parent(&args.output)?;
    let outcome = run_eval(&client, &run, &variant, &args.output)?;
    println!(
        "eval: {}: {} completion(s), {} failed, {} network call(s); {} {}",
        run.run_id,
        outcome.completions.len(),
        outcome.failed,
        client.network_calls(),
        wrote(outcome.wrote_file),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// grade
// ---------------------------------------------------------------------------

fn cmd_grade(ctx: &Ctx, args: GradeArgs) -> Result<()> {
    let selection: BoxSelection = args.box_pick.parse()?;
    let (run, completions) = read_completions(&args.completions)?;
    let bench_path = match (&args.benchmark, &args.benchmark_path) {
        (Some(name), None) => ctx.config.benchmark(name)?.path.clone(),
        (None, Some(path)) => path.clone(),
        _ => {
            return Err(Error::Config(
                "exactly one of --benchmark or --benchmark-path is required".to_string(),
            ))
        }
    };
    let bench = load_benchmark(&bench_path)?;
    if bench.name != run.benchmark {
        return Err(Error::Invalid(format!(
            "completions were produced on \"{}\" but the gold file is \"{}\"",
            run.benchmark, bench.name
        )));
    }

    let (records, pass) = grade_run_with(&completions, &bench, selection)?;
    let summary = summarize(&run, bench.mode, &records);
    ensure_parent(&args.output)?;
    write_grade_file(&args.output, &summary, &records)?;
    println!(
        "grade: {}: {}/{} pass@1 {}; wrote {}",
        run.run_id,
        pass.correct,
        pass.total,
        summary.pass_at_1,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// matrix / vote / report
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    meta: ArtifactMeta,
    matrix: StrategyMatrix,
}

#[derive(Serialize, Deserialize)]
struct VoteFile {
    meta: ArtifactMeta,
    vote: VoteOutcome,
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    text.into_bytes()
}

fn cmd_matrix(ctx: &Ctx, args: MatrixArgs) -> Result<()> {
    let mut summaries = Vec::with_capacity(args.grades.len());
    for path in &args.grades {
        let (summary, _) = read_grade_file(path)?;
        summaries.push(summary);
    }
    let matrix = assemble_matrix(&args.label, &summaries)?;
    let benchmarks = matrix.benchmarks();
    let benchmark_refs: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    let holes = matrix.holes(&benchmark_refs);

    let file = MatrixFile {
        meta: ArtifactMeta::of(ctx),
        matrix,
    };
    let changed = write_if_changed(&args.output, &pretty_json(&file))?;
    println!(
        "matrix: {}: {} cell(s) over {} benchmark(s), {} combination(s) unmeasured; {} {}",
        args.label,
        summaries.len(),
        benchmarks.len(),
        holes.len(),
        wrote(changed),
        args.output.display()
    );
    Ok(())
}

fn cmd_vote(ctx: &Ctx, args: VoteArgs) -> Result<()> {
    let spec = load_vote_spec(&args.spec)?;
    if args.grades.len() != 3 {
        return Err(Error::VoteSpec(format!(
            "exactly 3 grade files required, got {}",
            args.grades.len()
        )));
    }
    let mut grades = Vec::with_capacity(3);
    for path in &args.grades {
        grades.push(read_grade_file(path)?);
    }
    let vote = majority_vote(&spec, &grades)?;
    let line = format!(
        "vote: {} on {}: {}/{} = {} (tie-break {})",
        vote.member_label, vote.benchmark, vote.correct, vote.total, vote.score, vote.tie_break
    );
    let file = VoteFile {
        meta: ArtifactMeta::of(ctx),
        vote,
    };
    let changed = write_if_changed(&args.output, &pretty_json(&file))?;
    println!("{line}; {} {}", wrote(changed), args.output.display());
    Ok(())
}

fn cmd_report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let mut matrices = Vec::with_capacity(args.matrices.len());
    for path in &args.matrices {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MatrixFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.clone(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        matrices.push(file.matrix);
    }
    let mut votes = Vec::with_capacity(args.votes.len());
    for path in &args.votes {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VoteFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.clone(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        votes.push(file.vote);
    }
    let comparisons: Vec<ComparisonRow> = match &args.comparisons {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Malformed {
                path: path.clone(),
                line: e.line(),
                detail: e.to_string(),
            })?
        }
        None => Vec::new(),
    };

    let order: Option<Vec<String>> = args
        .benchmarks
        .as_ref()
        .map(|list| list.split(',').map(|s| s.trim().to_string()).collect());
    let report = Report {
        matrix: matrices,
        votes,
        comparisons,
    };
    let mut markdown = render_markdown(&report, order.as_deref());
    markdown.push_str(&format!(
        "\n---\n\nconfig {} · seed {}\n",
        ctx.config_hash, ctx.seed
    ));
    let json = render_json(&report);
    // The mirror is exactly {matrix, votes, comparisons}: guaranteed to
    // parse back into the same report.
    debug_assert!(parse_report_json(&json).is_ok());

    let dir = args
        .output_dir
        .clone()
        .unwrap_or_else(|| ctx.config.output_root.join("report"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let md_path = dir.join("report.md");
    let json_path = dir.join("report.json");
    let md_changed = write_if_changed(&md_path, markdown.as_bytes())?;
    let json_changed = write_if_changed(&json_path, json.as_bytes())?;
    println!(
        "report: {} {} and {} {}",
        wrote(md_changed),
        md_path.display(),
        wrote(json_changed),
        json_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn cmd_validate(ctx: &Ctx, args: ValidateArgs) -> Result<()> {
    let problems = ctx.config.validate(args.offline);
    if problems.is_empty() {
        println!(
            "validate: ok (config hash {}, seed {})",
            ctx.config_hash, ctx.seed
        );
        return Ok(());
    }
    for problem in &problems {
        println!("problem: {problem}");
    }
    Err(Error::Config(format!(
        "configuration invalid: {} problem(s) found",
        problems.len()
    )))
}
