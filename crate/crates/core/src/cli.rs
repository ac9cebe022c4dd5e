//! Command-line front end. Data goes to files under `--out`; everything
//! printed goes to stderr.
//!
//! Exit codes: 0 success, 1 bad arguments or config, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::annotations::{load_flickr30k_entities, load_visual_genome, read_corpus, write_corpus, Corpus};
use crate::config::{load_config, ConfigError, PipelineConfig};
use crate::dataset::{self, read_records, write_records, OptionStyle};
use crate::eval;
use crate::llm::{rate_limited, with_retry, ChatProvider, HttpProvider, MockProvider, MockScript};
use crate::pipeline::{self, PipelineError, RunOptions, StageContext};
use crate::record::{InstructionFormat, VerificationStatus};
use crate::selection::{compute_corpus_stats, filter_by_caption_richness, filter_by_object_count};

#[derive(Debug, Parser)]
#[command(name = "comvint", version, about = "Visual reasoning instruction synthesis and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Serve provider calls from a mock script instead of the network.
    #[arg(long, global = true, value_name = "PATH")]
    pub mock_script: Option<PathBuf>,
    /// Continue an interrupted run (with `run`).
    #[arg(long, global = true, value_name = "RUN_ID")]
    pub resume: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Validate inputs and print planned work without calling a provider.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Stop a run after this many checkpoints (testing aid).
    #[arg(long, global = true, hide = true)]
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceFormat {
    Flickr30kEntities,
    VisualGenome,
    Canonical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rule {
    CaptionRichness,
    ObjectCount,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Task {
    CrossModal,
    OutsideKnowledge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalKind {
    YesNo,
    Choice,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Style {
    Dot,
    Paren,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw annotations into a canonical corpus (`corpus.jsonl`).
    Ingest {
        #[arg(long, value_enum)]
        format: SourceFormat,
        #[arg(long)]
        input: PathBuf,
    },
    /// Filter a canonical corpus (`selected.jsonl`).
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        rule: Rule,
        /// Defaults to the config threshold for the rule.
        #[arg(long)]
        threshold: Option<usize>,
    },
    /// Generate round-0 records from a filtered corpus (`synthesized.jsonl`).
    Synthesize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
    },
    /// Verify round-0 records and run the complication rounds (`verified.jsonl`).
    /// Images are looked up in the corpora named by the config.
    ComplicateVerify {
        #[arg(long)]
        input: PathBuf,
    },
    /// Convert a share of passed records to bool and multi-choice (`reformulated.jsonl`).
    Reformulate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Sample records to the configured task ratio (`mixed.jsonl`).
    Mix {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `mix.total`, then to the largest total the pools allow.
        #[arg(long)]
        total: Option<usize>,
    },
    /// Write records as two-turn conversations (`conversations.json`).
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        style: Option<Style>,
        /// Keep only records up to this complication round.
        #[arg(long)]
        max_round: Option<u32>,
    },
    /// Composition and length statistics (`stats.json`).
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score benchmark predictions (`eval_report.json`, `eval_report.txt`).
    Eval {
        #[arg(long, value_enum)]
        kind: EvalKind,
        #[arg(long)]
        input: PathBuf,
    },
    /// Full pipeline into `{out}/{run_id}/`.
    Run,
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::RunExists(_) | PipelineError::RunNotFound(_) => {
                CliError::User(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => load_config(path).map_err(|e| match e {
            ConfigError::Io { .. } | ConfigError::Invalid(_) => CliError::User(e.to_string()),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

pub fn build_provider(config: &PipelineConfig, mock_script: Option<&Path>) -> Result<Arc<dyn ChatProvider>, CliError> {
    if let Some(path) = mock_script {
        let script = MockScript::load(path).map_err(|e| CliError::User(e.to_string()))?;
        return Ok(Arc::new(MockProvider::new(script)));
    }
    let p = &config.provider;
    let http = HttpProvider::from_env(&p.base_url, Duration::from_secs(p.timeout_secs)).map_err(runtime)?;
    if std::env::var(crate::llm::API_KEY_ENV).is_err() {
        log::warn!("{} is not set; requests go out without credentials", crate::llm::API_KEY_ENV);
    }
    let retried = with_retry(http, p.retry.clone());
    Ok(match p.rate_limit.clone() {
        Some(limit) => Arc::new(rate_limited(retried, limit)),
        None => Arc::new(retried),
    })
}

fn out_file(global: &GlobalArgs, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&global.out).map_err(|e| runtime(format!("cannot create {}: {e}", global.out.display())))?;
    Ok(global.out.join(name))
}

fn records_in(path: &Path) -> Result<Vec<crate::record::InstructionRecord>, CliError> {
    read_records(path).map_err(runtime)
}

fn write_out(records: &[crate::record::InstructionRecord], global: &GlobalArgs, name: &str) -> Result<(), CliError> {
    let path = out_file(global, name)?;
    write_records(records, &path).map_err(runtime)?;
    eprintln!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn corpus_in(path: &Path) -> Result<Corpus, CliError> {
    read_corpus(path).map_err(runtime)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let config = effective_config(g)?;
    config.validate().map_err(|e| CliError::User(e.to_string()))?;
    if g.resume.is_some() && !matches!(cli.command, Command::Run) {
        return Err(CliError::User("--resume only applies to `run`".into()));
    }
    match &cli.command {
        Command::Ingest { format, input } => {
            let corpus = match format {
                SourceFormat::Flickr30kEntities => {
                    let load = load_flickr30k_entities(input).map_err(runtime)?;
                    if load.skipped_lines > 0 {
                        eprintln!("skipped {} malformed sentences", load.skipped_lines);
                    }
                    load.corpus
                }
                SourceFormat::VisualGenome => load_visual_genome(input).map_err(runtime)?,
                SourceFormat::Canonical => read_corpus(input).map_err(runtime)?,
            };
            eprintln!("ingested {} images", corpus.len());
            if g.dry_run {
                return Ok(());
            }
            let path = out_file(g, "corpus.jsonl")?;
            write_corpus(&corpus, &path).map_err(runtime)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Select { input, rule, threshold } => {
            let corpus = corpus_in(input)?;
            let (kept, report) = match rule {
                Rule::CaptionRichness => {
                    filter_by_caption_richness(&corpus, threshold.unwrap_or(config.caption_char_min))
                }
                Rule::ObjectCount => filter_by_object_count(&corpus, threshold.unwrap_or(config.object_count_max)),
            };
            eprintln!(
                "{:?} threshold {}: kept {} of {} images",
                report.rule, report.threshold_used, report.retained_count, report.input_count
            );
            if g.dry_run {
                return Ok(());
            }
            let path = out_file(g, "selected.jsonl")?;
            write_corpus(&kept, &path).map_err(runtime)?;
        }
        Command::Synthesize { input, task } => {
            let corpus = corpus_in(input)?;
            let per_image = match task {
                Task::CrossModal => config.cross_modal_per_image,
                Task::OutsideKnowledge => config.outside_knowledge_per_image,
            };
            if g.dry_run {
                eprintln!(
                    "would make {} provider calls for up to {} records",
                    corpus.len(),
                    corpus.len() * per_image
                );
                return Ok(());
            }
            let provider = build_provider(&config, g.mock_script.as_deref())?;
            let prompts = crate::prompts::PromptLibrary::with_overrides(&config.templates).map_err(|e| CliError::User(e.to_string()))?;
            let ctx = StageContext {
                config: &config,
                prompts: &prompts,
                provider: provider.as_ref(),
            };
            let out = match task {
                Task::CrossModal => pipeline::synthesize_cross_modal(ctx, &corpus),
                Task::OutsideKnowledge => {
                    let stats = compute_corpus_stats(&corpus);
                    pipeline::synthesize_outside_knowledge(ctx, &corpus, &stats)
                }
            };
            eprintln!("{} images skipped", out.skips.len());
            write_out(&out.records, g, "synthesized.jsonl")?;
        }
        Command::ComplicateVerify { input } => {
            let records = records_in(input)?;
            let inputs = pipeline::prepare(&config)?;
            let (round0, _): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.complication_round == 0);
            if g.dry_run {
                eprintln!(
                    "would verify {} round-0 records and run {} complication rounds",
                    round0.len(),
                    config.complication_rounds
                );
                return Ok(());
            }
            let provider = build_provider(&config, g.mock_script.as_deref())?;
            let ctx = StageContext {
                config: &config,
                prompts: &inputs.prompts,
                provider: provider.as_ref(),
            };
            let (todo, done): (Vec<_>, Vec<_>) = round0
                .into_iter()
                .partition(|r| r.verification_status == VerificationStatus::Unverified);
            let mut verified = pipeline::verify(ctx, &todo, &inputs.images).records;
            verified.extend(done);
            let out = pipeline::complicate_then_verify(ctx, &verified, &inputs.images)?;
            eprintln!("{} items skipped or failed", out.skips.len());
            write_out(&out.records, g, "verified.jsonl")?;
        }
        Command::Reformulate { input } => {
            let records = pipeline::keep_passed(&records_in(input)?);
            let records: Vec<_> = records.into_iter().filter(|r| r.format == InstructionFormat::OpenEnded).collect();
            if g.dry_run {
                let plan = pipeline::reformulation_plan(&records, &config, config.seed);
                eprintln!("would convert {} of {} records", plan.len(), records.len());
                return Ok(());
            }
            let provider = build_provider(&config, g.mock_script.as_deref())?;
            let prompts = crate::prompts::PromptLibrary::with_overrides(&config.templates).map_err(|e| CliError::User(e.to_string()))?;
            let ctx = StageContext {
                config: &config,
                prompts: &prompts,
                provider: provider.as_ref(),
            };
            let out = pipeline::reformulate(ctx, &records, config.seed)?;
            write_out(&out.records, g, "reformulated.jsonl")?;
        }
        Command::Mix { input, total } => {
            let records = records_in(input)?;
            let target = config.mix.target();
            let total = total
                .or(config.mix.total)
                .unwrap_or_else(|| dataset::max_mix_total(&records, target));
            let (cm, ok) = target.shares(total);
            eprintln!("mixing {total} records: {cm} cross-modal, {ok} outside-knowledge");
            let mixed = dataset::mix(&records, target, total, config.seed).map_err(|e| CliError::User(e.to_string()))?;
            if !g.dry_run {
                write_out(&mixed, g, "mixed.jsonl")?;
            }
        }
        Command::Export { input, style, max_round } => {
            let mut records = records_in(input)?;
            if let Some(k) = max_round {
                records = dataset::subset_by_round(&records, *k);
            }
            let style = match style {
                Some(Style::Dot) => OptionStyle::Dot,
                Some(Style::Paren) => OptionStyle::Paren,
                None => config.option_style,
            };
            eprintln!("exporting {} records", records.len());
            if !g.dry_run {
                let path = out_file(g, "conversations.json")?;
                dataset::export_conversation_format(&records, &path, style).map_err(runtime)?;
            }
        }
        Command::Stats { input } => {
            let records = records_in(input)?;
            let s = dataset::stats(&records);
            eprintln!(
                "{} records; by task {:?}; by format {:?}; by round {:?}",
                s.total_records, s.by_task_type, s.by_format, s.by_round
            );
            if !g.dry_run {
                let path = out_file(g, "stats.json")?;
                let text = serde_json::to_string_pretty(&s).expect("stats serialize");
                std::fs::write(&path, text + "\n").map_err(runtime)?;
            }
        }
        Command::Eval { kind, input } => {
            let report = match kind {
                EvalKind::YesNo => {
                    let pairs = eval::read_yes_no_predictions(input).map_err(runtime)?;
                    eval::yes_no_report(&pairs).map_err(runtime)?
                }
                EvalKind::Choice => {
                    let items = eval::read_choice_predictions(input).map_err(runtime)?;
                    eval::choice_report(&items).map_err(runtime)?
                }
            };
            let table = report.to_table();
            eprint!("{table}");
            if !g.dry_run {
                let json = out_file(g, "eval_report.json")?;
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&json, text + "\n").map_err(runtime)?;
                std::fs::write(out_file(g, "eval_report.txt")?, table).map_err(runtime)?;
            }
        }
        Command::Run => run_command(g, config)?,
    }
    Ok(())
}

fn run_command(g: &GlobalArgs, config: PipelineConfig) -> Result<(), CliError> {
    let options = RunOptions {
        out_dir: g.out.clone(),
        halt_after: g.halt_after,
    };
    if let Some(run_id) = &g.resume {
        let snapshot = pipeline::run_config(&g.out.join(run_id))?;
        if g.dry_run {
            eprintln!("would resume {run_id}");
            return Ok(());
        }
        let provider = build_provider(&snapshot, g.mock_script.as_deref())?;
        let outcome = pipeline::resume(run_id, provider.as_ref(), &options)?;
        eprintln!("dataset: {} ({} records)", outcome.dataset_path.display(), outcome.records.len());
        return Ok(());
    }
    if g.config.is_none() {
        return Err(CliError::User("`run` needs --config (or --resume)".into()));
    }
    if g.dry_run {
        let plan = pipeline::plan_run(&config)?;
        eprintln!(
            "cross-modal images: {}\noutside-knowledge images: {}\nsynthesis calls: {}\nround-0 records (max): {}\ncomplication rounds: {}",
            plan.cross_modal_images,
            plan.outside_knowledge_images,
            plan.synthesis_calls,
            plan.max_round0_records,
            plan.complication_rounds
        );
        return Ok(());
    }
    let provider = build_provider(&config, g.mock_script.as_deref())?;
    let outcome = pipeline::run(&config, provider.as_ref(), &options)?;
    eprintln!(
        "run {}: dataset {} ({} records, {} provider calls, cost {:.4})",
        outcome.run_id,
        outcome.dataset_path.display(),
        outcome.records.len(),
        outcome.manifest.provider_calls,
        outcome.manifest.ledger.total_cost()
    );
    Ok(())
}
