//! `unweaver` command-line front end. JSON lines go to stdout, logs to stderr.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use unweaver::gateway::stub_answer;
use unweaver::report::{answer_line, query_lines, usage_line};
use unweaver::{
    aligned_retrieve, answer_prompt, build_index, load_index, retrieve, save_index, AlignMethod, ElectionRule,
    EmbedBackend, EntityMention, Error, ExtractorBackend, Index, Metric, ModelGateway, Phase, RetrievalResult,
};

use crate::config::{read_config_file, Backend, CliConfig};

#[derive(Debug, Parser)]
#[command(
    name = "unweaver",
    version,
    about = "Entity-centric retrieval over a document corpus"
)]
struct Cli {
    /// Config file (.toml or .json). Flags override environment, which overrides the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where the index is written by `index` and read by the other commands.
    #[arg(long, global = true)]
    index_path: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an index from the .txt/.md files under a directory.
    Index { corpus_dir: PathBuf },
    /// Retrieve context chunks for a question.
    Query {
        question: String,
        #[command(flatten)]
        flags: QueryFlags,
    },
    /// Retrieve, then answer the question from the elected chunks.
    Answer {
        question: String,
        #[command(flatten)]
        flags: QueryFlags,
    },
    /// Show the entity class for a name.
    Inspect { entity_name: String },
    /// Summarize the index and its token usage.
    Stats,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RuleArg {
    Av,
    PavGreedy,
    CcGreedy,
    ExactPav,
    ExactCc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlignArg {
    None,
    Utility,
    Cls,
}

#[derive(Debug, Args)]
struct QueryFlags {
    /// Number of entity classes that vote.
    #[arg(long)]
    k0: Option<usize>,
    /// Number of chunks to elect.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Select classes by aligned strength instead of an election.
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    /// Classes kept after alignment.
    #[arg(long)]
    k_prime: Option<usize>,
    /// Per-chunk budget used by alignment.
    #[arg(long)]
    f: Option<f64>,
}

impl QueryFlags {
    fn apply(&self, cfg: &mut CliConfig) {
        if let Some(k0) = self.k0 {
            cfg.similarity.k0 = k0;
        }
        if let Some(r) = self.r {
            cfg.election.r = r;
        }
        if let Some(rule) = self.rule {
            cfg.election.rule = match rule {
                RuleArg::Av => ElectionRule::Av,
                RuleArg::PavGreedy => ElectionRule::PavGreedy,
                RuleArg::CcGreedy => ElectionRule::CcGreedy,
                RuleArg::ExactPav => ElectionRule::ExactPav,
                RuleArg::ExactCc => ElectionRule::ExactCc,
            };
        }
        if let Some(metric) = self.metric {
            cfg.similarity.metric = match metric {
                MetricArg::Cosine => Metric::Cosine,
                MetricArg::Euclidean => Metric::Euclidean,
            };
        }
        if let Some(align) = self.align {
            cfg.align.method = match align {
                AlignArg::None => AlignMethod::None,
                AlignArg::Utility => AlignMethod::Utility,
                AlignArg::Cls => AlignMethod::Cls,
            };
        }
        if let Some(k) = self.k_prime {
            cfg.align.k_prime = k;
        }
        if let Some(f) = self.f {
            cfg.align.budget = f;
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn effective_config(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => read_config_file(path).map_err(CliError::Usage)?,
        None => CliConfig::default(),
    };
    // the file's backend choice also switches extraction and embedding
    cfg.apply_backend(cfg.backend);
    cfg.gateway.apply_env();
    if let Some(backend) = cli.backend {
        cfg.apply_backend(backend);
    }
    if let Some(path) = &cli.index_path {
        cfg.index_path = path.clone();
    }
    if let Command::Query { flags, .. } | Command::Answer { flags, .. } = &cli.command {
        flags.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gateway(cfg: &CliConfig) -> Result<ModelGateway, CliError> {
    log::info!("using model gateway at {}", cfg.gateway.base_url);
    Ok(ModelGateway::new(cfg.gateway.clone())?)
}

/// A gateway is needed at query time when the index was built with model
/// calls or the llm backend is selected for answering.
fn query_gateway(cfg: &CliConfig, index: &Index) -> Result<Option<ModelGateway>, CliError> {
    let built_with_llm = index.config().embedding.backend == EmbedBackend::Api
        || index.config().extraction.backend == ExtractorBackend::Llm;
    if cfg.backend == Backend::Llm || built_with_llm {
        gateway(cfg).map(Some)
    } else {
        Ok(None)
    }
}

fn open_index(cfg: &CliConfig) -> Result<Index, CliError> {
    load_index(&cfg.index_path)
        .map_err(|e| CliError::Runtime(format!("cannot load index {}: {e}", cfg.index_path.display())))
}

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("output line serializes"));
}

#[derive(Serialize)]
#[serde(tag = "type", rename = "index")]
struct IndexLine<'a> {
    index_path: &'a str,
    documents: usize,
    chunks: usize,
    classes: usize,
    dim: usize,
}

#[derive(Serialize)]
#[serde(tag = "type", rename = "entity")]
struct EntityLine<'a> {
    class_id: usize,
    name: &'a str,
    normalized_name: &'a str,
    chunk_ids: &'a [usize],
    members: &'a [EntityMention],
    concat_description: &'a str,
}

#[derive(Serialize)]
#[serde(tag = "type", rename = "stats")]
struct StatsLine<'a> {
    index_path: &'a str,
    documents: usize,
    chunks: usize,
    classes: usize,
    mentions: usize,
    dim: usize,
    extraction: ExtractorBackend,
    embedding: EmbedBackend,
}

fn document_count(index: &Index) -> usize {
    index
        .chunks()
        .iter()
        .map(|c| c.source_id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

fn cmd_index(cfg: &CliConfig, corpus_dir: &Path) -> Result<(), CliError> {
    let gw = match cfg.backend {
        Backend::Llm => Some(gateway(cfg)?),
        Backend::Stub => None,
    };
    let index = build_index(corpus_dir, &cfg.index, gw.as_ref())?;
    save_index(&index, &cfg.index_path)?;
    log::info!("wrote index to {}", cfg.index_path.display());
    emit(&IndexLine {
        index_path: &cfg.index_path.to_string_lossy(),
        documents: document_count(&index),
        chunks: index.num_chunks(),
        classes: index.num_classes(),
        dim: index.dim(),
    });
    println!("{}", usage_line(index.token_usage()));
    Ok(())
}

fn run_query(
    cfg: &CliConfig,
    index: &Index,
    question: &str,
    gw: Option<&ModelGateway>,
) -> Result<RetrievalResult, CliError> {
    let result = match cfg.align.method {
        AlignMethod::None => retrieve(index, question, &cfg.similarity, &cfg.election, gw)?,
        _ => aligned_retrieve(index, question, &cfg.align, gw)?,
    };
    for line in query_lines(index, question, &result) {
        println!("{line}");
    }
    Ok(result)
}

fn cmd_query(cfg: &CliConfig, question: &str) -> Result<(), CliError> {
    let index = open_index(cfg)?;
    let gw = query_gateway(cfg, &index)?;
    run_query(cfg, &index, question, gw.as_ref())?;
    if let Some(gw) = &gw {
        println!("{}", usage_line(gw.usage()));
    }
    Ok(())
}

fn cmd_answer(cfg: &CliConfig, question: &str) -> Result<(), CliError> {
    let index = open_index(cfg)?;
    let gw = query_gateway(cfg, &index)?;
    let result = run_query(cfg, &index, question, gw.as_ref())?;
    let context: Vec<_> = result
        .elected_chunks
        .iter()
        .map(|&k| index.chunks()[k].clone())
        .collect();
    let answer = match &gw {
        Some(gw) => {
            let request = gw.chat_request(answer_prompt(&context, question));
            gw.chat(Phase::Query, &request)?.content.trim().to_string()
        }
        None => stub_answer(&context, question),
    };
    println!("{}", answer_line(&answer, &result.elected_chunks));
    if let Some(gw) = &gw {
        println!("{}", usage_line(gw.usage()));
    }
    Ok(())
}

fn cmd_inspect(cfg: &CliConfig, name: &str) -> Result<(), CliError> {
    let index = open_index(cfg)?;
    let class = index
        .find_class(name)
        .ok_or_else(|| CliError::Runtime(format!("no entity named `{name}` in the index")))?;
    emit(&EntityLine {
        class_id: class.class_id,
        name: &class.display_name,
        normalized_name: &class.normalized_name,
        chunk_ids: &class.chunk_ids,
        members: &class.members,
        concat_description: &class.concat_description,
    });
    Ok(())
}

fn cmd_stats(cfg: &CliConfig) -> Result<(), CliError> {
    let index = open_index(cfg)?;
    emit(&StatsLine {
        index_path: &cfg.index_path.to_string_lossy(),
        documents: document_count(&index),
        chunks: index.num_chunks(),
        classes: index.num_classes(),
        mentions: index.classes().iter().map(|c| c.members.len()).sum(),
        dim: index.dim(),
        extraction: index.config().extraction.backend,
        embedding: index.config().embedding.backend,
    });
    println!("{}", usage_line(index.token_usage()));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Index { corpus_dir } => cmd_index(&cfg, corpus_dir),
        Command::Query { question, .. } => cmd_query(&cfg, question),
        Command::Answer { question, .. } => cmd_answer(&cfg, question),
        Command::Inspect { entity_name } => cmd_inspect(&cfg, entity_name),
        Command::Stats => cmd_stats(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
