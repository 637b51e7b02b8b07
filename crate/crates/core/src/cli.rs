//! Command-line front end: `synth`, `train`, `infer`, `eval`, `agents` and `demo`.
//!
//! Run settings are resolved per key from, in decreasing priority, command
//! line flags, the `[run]` section of a config file, `AGENTGRAPH_<KEY>`
//! environment variables and built-in defaults. Exit status is 0 on
//! success, 1 for usage errors and 2 for runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use thiserror::Error;

use crate::agent_db::{db_from_entries, load_ini, parse_agent_config, AgentDb, AgentEntry, RUN_SECTION};
use crate::backends::decompose::{ChatDecomposer, Decomposer, StoredGraphDecomposer};
use crate::backends::embed::{Embedder, EndpointEmbedder, LocalHashEmbedder, DEFAULT_DIMENSION};
use crate::backends::http::Endpoint;
use crate::backends::llm::{ChatClient, LlmBackend};
use crate::backends::sim::SimulatedBackend;
use crate::backends::AgentBackend;
use crate::orchestrator::{
    evaluate, parse_results, results_to_jsonl, BackendKind, CrmKind, Mode, Pipeline, RunConfig, RunStats, TaskOutcome,
};
use crate::reward::{ModelCrm, OracleCrm, RewardModel, RuleCrm};
use crate::simenv::{demo_pool, SkewedPool, DEMO_DOMAINS};
use crate::synthesis::{parse_dataset, parse_pool, prepare_pool, synthesize_dataset, Aggregation, DifficultyCounts};

/// Prefix of the environment variables that supply run settings.
pub const ENV_PREFIX: &str = "AGENTGRAPH_";

/// Settings outside [`RunConfig`] that pick external collaborators.
const EXTRA_KEYS: [&str; 5] =
    ["default_provider", "decomposer_model", "embedder", "embedding_model", "embedding_dimension"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "agentgraph", version, about = "Reward-driven agent routing over subtask graphs")]
pub struct Cli {
    /// INI file whose [run] section supplies settings (JSON: an object with a "run" key)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a composite-task dataset from a pool of single-answer problems
    Synth(SynthArgs),
    /// Learn agent statistics on a dataset and write a database snapshot
    Train(TrainArgs),
    /// Solve a dataset with a trained database and write a results file
    Infer(InferArgs),
    /// Grade a results file against its dataset
    Eval(EvalArgs),
    /// Print the agents of a database snapshot, best average reward first
    Agents(AgentsArgs),
    /// Write a sample problem pool and simulated agent pool
    Demo(DemoArgs),
}

/// Flags that override run settings.
#[derive(Debug, Args, Default)]
pub struct RunFlags {
    #[arg(long)]
    pub seed: Option<String>,
    /// rule, model or oracle
    #[arg(long)]
    pub crm: Option<String>,
    /// llm or simulated
    #[arg(long)]
    pub backend: Option<String>,
    /// ucb, greedy or random
    #[arg(long)]
    pub strategy: Option<String>,
    /// Upper bound on subtasks solved concurrently
    #[arg(long, value_name = "N")]
    pub max_parallel: Option<String>,
    /// Any other run setting, e.g. --set top_k=4 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Pool file (JSON lines of {text, answer, domain, source_id})
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub easy: usize,
    #[arg(long, default_value_t = 0)]
    pub medium: usize,
    #[arg(long, default_value_t = 0)]
    pub hard: usize,
    #[arg(long)]
    pub seed: Option<String>,
    /// product or sum
    #[arg(long, default_value = "product")]
    pub aggregation: Aggregation,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Agent pool (INI or JSON)
    #[arg(long)]
    pub agents: PathBuf,
    /// Output snapshot
    #[arg(long)]
    pub db: PathBuf,
    /// Continue from this snapshot instead of a fresh database
    #[arg(long, value_name = "SNAPSHOT")]
    pub init_db: Option<PathBuf>,
    /// Training curve CSV
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Per-task results of the training pass (JSON lines)
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Trained snapshot
    #[arg(long)]
    pub db: PathBuf,
    /// Agent pool; required by the simulated backend
    #[arg(long)]
    pub agents: Option<PathBuf>,
    #[arg(long)]
    pub results: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Print the report as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AgentsArgs {
    #[arg(long)]
    pub db: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory that receives pool.jsonl and agents.ini
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Problems per domain
    #[arg(long, default_value_t = 100)]
    pub per_domain: usize,
}

/// Entry point shared by the binary and tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}\n\nFor more information, try '--help'."),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a, cli.config.as_deref()),
        Command::Train(a) => train(a, cli.config.as_deref()),
        Command::Infer(a) => infer(a, cli.config.as_deref()),
        Command::Eval(a) => eval(a),
        Command::Agents(a) => agents(a),
        Command::Demo(a) => demo(a),
    }
}

// ---------------------------------------------------------------------------
// files

fn read_input(path: &Path) -> Result<String, CliError> {
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(CliError::from)
}

/// Rejects outputs that would overwrite an input or land in a missing directory.
fn check_outputs(outputs: &[&Path], inputs: &[&Path]) -> Result<(), CliError> {
    for out in outputs {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(usage(format!("output directory {} does not exist", parent.display())));
            }
        }
        for input in inputs {
            if same_file(out, input) {
                return Err(usage(format!("output {} would overwrite an input file", out.display())));
            }
        }
    }
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// settings

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub run: RunConfig,
    pub default_provider: String,
    pub decomposer_model: String,
    pub embedder: String,
    pub embedding_model: String,
    pub embedding_dimension: usize,
}

fn run_keys() -> (Vec<String>, Vec<String>) {
    let defaults = serde_json::to_value(RunConfig::default()).expect("run config serializes");
    let top: Vec<String> =
        defaults.as_object().unwrap().keys().filter(|k| !matches!(k.as_str(), "params" | "mode")).cloned().collect();
    let params: Vec<String> = defaults["params"].as_object().unwrap().keys().cloned().collect();
    (top, params)
}

/// Every key accepted in `[run]`, `--set` and the environment.
pub fn known_keys() -> Vec<String> {
    let (top, params) = run_keys();
    let mut keys: Vec<String> = top.into_iter().chain(params).chain(EXTRA_KEYS.iter().map(|k| k.to_string())).collect();
    keys.sort();
    keys
}

/// Reads the `[run]` section of an INI document or the `run` object of a JSON one.
pub fn config_section(document: &str) -> Result<BTreeMap<String, String>, String> {
    let trimmed = document.trim_start();
    if trimmed.starts_with('{') {
        let v: Value = serde_json::from_str(document).map_err(|e| e.to_string())?;
        let Some(run) = v.get(RUN_SECTION) else { return Ok(BTreeMap::new()) };
        let obj = run.as_object().ok_or("\"run\" must be an object")?;
        return Ok(obj
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().map_or_else(|| v.to_string(), str::to_string)))
            .collect());
    }
    if trimmed.starts_with('[')
        && !trimmed[1..].trim_start().starts_with(|c: char| c.is_alphanumeric() || c == '_' || c == '-')
    {
        // a JSON agent array carries no run settings
        return Ok(BTreeMap::new());
    }
    let ini = load_ini(document).map_err(|e| e.to_string())?;
    Ok(ini
        .section(Some(RUN_SECTION))
        .map(|s| s.iter().map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).collect())
        .unwrap_or_default())
}

/// Merges the sources (lowest priority first) into resolved settings.
pub fn resolve_settings(
    env: &BTreeMap<String, String>,
    config: &BTreeMap<String, String>,
    flags: &BTreeMap<String, String>,
    mode: Mode,
) -> Result<Settings, String> {
    let known = known_keys();
    for (source, map) in [("config file", config), ("flags", flags)] {
        if let Some(k) = map.keys().find(|k| !known.contains(k)) {
            return Err(format!("unknown setting {k:?} in {source}"));
        }
    }
    let mut merged = env.clone();
    merged.extend(config.clone());
    merged.extend(flags.clone());

    let (top, params) = run_keys();
    let mut value = serde_json::to_value(RunConfig::default()).expect("run config serializes");
    for (k, raw) in &merged {
        let v = scalar(raw);
        if top.contains(k) {
            value[k.as_str()] = v;
        } else if params.contains(k) {
            value["params"][k.as_str()] = v;
        }
    }
    let mut run: RunConfig = serde_json::from_value(value).map_err(|e| format!("invalid setting: {e}"))?;
    run.mode = mode;
    run.validate().map_err(|e| e.to_string())?;

    let text = |k: &str, default: &str| merged.get(k).cloned().unwrap_or_else(|| default.to_string());
    let embedding_dimension = match merged.get("embedding_dimension") {
        Some(v) => v.parse().map_err(|_| format!("embedding_dimension {v:?} is not a positive integer"))?,
        None => DEFAULT_DIMENSION,
    };
    let embedder = text("embedder", "local");
    if !["local", "endpoint"].contains(&embedder.as_str()) {
        return Err(format!("embedder must be local or endpoint, got {embedder:?}"));
    }
    Ok(Settings {
        run,
        default_provider: text("default_provider", "llm"),
        decomposer_model: text("decomposer_model", "decomposer"),
        embedder,
        embedding_model: text("embedding_model", "text-embedding-3-small"),
        embedding_dimension,
    })
}

/// Numbers and booleans become JSON scalars; anything else stays a string.
fn scalar(raw: &str) -> Value {
    match serde_json::from_str::<Value>(raw.trim()) {
        Ok(v @ (Value::Number(_) | Value::Bool(_))) => v,
        _ => Value::String(raw.trim().to_string()),
    }
}

fn env_settings() -> BTreeMap<String, String> {
    known_keys()
        .into_iter()
        .filter_map(|k| std::env::var(format!("{ENV_PREFIX}{}", k.to_uppercase())).ok().map(|v| (k, v)))
        .collect()
}

fn flag_settings(flags: &RunFlags, seed: Option<&String>) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for pair in &flags.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    for (k, v) in [
        ("seed", seed.or(flags.seed.as_ref())),
        ("crm", flags.crm.as_ref()),
        ("backend", flags.backend.as_ref()),
        ("strategy", flags.strategy.as_ref()),
        ("max_parallel_nodes", flags.max_parallel.as_ref()),
    ] {
        if let Some(v) = v {
            out.insert(k.to_string(), v.clone());
        }
    }
    Ok(out)
}

/// Resolves settings for a subcommand. Without `--config`, the `[run]`
/// section of the agent pool file (if any) is used.
fn settings(
    mode: Mode,
    config: Option<&Path>,
    agents_doc: Option<&str>,
    flags: BTreeMap<String, String>,
) -> Result<Settings, CliError> {
    let section = match config {
        Some(path) => config_section(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => match agents_doc {
            Some(doc) => config_section(doc).map_err(|e| usage(format!("agent file: {e}")))?,
            None => BTreeMap::new(),
        },
    };
    resolve_settings(&env_settings(), &section, &flags, mode).map_err(usage)
}

// ---------------------------------------------------------------------------
// collaborators

fn make_embedder(s: &Settings) -> Result<Box<dyn Embedder>, CliError> {
    if s.embedder == "endpoint" {
        let endpoint = Endpoint::from_env("embedding").map_err(|e| anyhow!(e))?;
        return Ok(Box::new(EndpointEmbedder {
            endpoint,
            model: s.embedding_model.clone(),
            dimension: s.embedding_dimension,
        }));
    }
    Ok(Box::new(LocalHashEmbedder::new(s.embedding_dimension)))
}

fn make_crm(s: &Settings) -> Result<Box<dyn RewardModel>, CliError> {
    let tol = s.run.rel_tolerance;
    Ok(match s.run.crm {
        CrmKind::Rule => Box::new(RuleCrm { rel_tolerance: tol }),
        CrmKind::Oracle => Box::new(OracleCrm { rel_tolerance: tol }),
        CrmKind::Model => Box::new(ModelCrm { endpoint: Endpoint::from_env("crm").map_err(|e| anyhow!(e))? }),
    })
}

fn make_decomposer(s: &Settings) -> Result<Box<dyn Decomposer>, CliError> {
    if s.run.stored_graphs {
        return Ok(Box::new(StoredGraphDecomposer));
    }
    let endpoint = Endpoint::from_env("decomposer").map_err(|e| anyhow!(e))?;
    Ok(Box::new(ChatDecomposer { client: ChatClient::new(endpoint), model: s.decomposer_model.clone() }))
}

fn make_backend(s: &Settings, db: &AgentDb, entries: Option<&[AgentEntry]>) -> Result<Box<dyn AgentBackend>, CliError> {
    match s.run.backend {
        BackendKind::Simulated => {
            let entries = entries.ok_or_else(|| usage("the simulated backend needs --agents"))?;
            let mut specs = Vec::new();
            for e in entries {
                specs.push(
                    e.simulated_spec()
                        .ok_or_else(|| anyhow!("agent {} has no `skills`, so it cannot be simulated", e.agent_id))?,
                );
            }
            Ok(Box::new(SimulatedBackend::new(specs, s.run.seed).map_err(|e| anyhow!(e))?))
        }
        BackendKind::Llm => {
            let statics = db.agents().iter().map(|a| &a.static_profile);
            Ok(Box::new(LlmBackend::from_env(statics, &s.default_provider).map_err(|e| anyhow!(e))?))
        }
    }
}

fn summary(label: &str, stats: &RunStats) {
    eprintln!(
        "{label}: {} tasks, accuracy {:.1}%, {} failed, {} executions, {} tokens",
        stats.tasks_seen,
        stats.accuracy * 100.0,
        stats.failed_tasks,
        stats.executions,
        stats.total_tokens
    );
}

fn result_lines(tasks: &[TaskOutcome]) -> String {
    results_to_jsonl(&tasks.iter().map(TaskOutcome::result_line).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// subcommands

fn synth(a: SynthArgs, config: Option<&Path>) -> Result<(), CliError> {
    let counts = DifficultyCounts { easy: a.easy, medium: a.medium, hard: a.hard };
    if a.easy + a.medium + a.hard == 0 {
        return Err(usage("nothing to generate: pass --easy, --medium and/or --hard"));
    }
    check_outputs(&[&a.out], &[&a.pool])?;
    let doc = read_input(&a.pool)?;
    let flags = a.seed.iter().map(|s| ("seed".to_string(), s.clone())).collect();
    let s = settings(Mode::Train, config, None, flags)?;
    let items = parse_pool(&doc).context("parsing pool")?;
    let pool = prepare_pool(&items);
    log::info!("{} of {} pool items carry a usable constant", pool.len(), items.len());
    let dataset = synthesize_dataset(&pool, counts, s.run.seed, a.aggregation).context("synthesizing dataset")?;
    write_output(&a.out, &dataset)?;
    eprintln!("wrote {} tasks to {}", a.easy + a.medium + a.hard, a.out.display());
    Ok(())
}

fn train(a: TrainArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&a.data, &a.agents];
    inputs.extend(a.init_db.as_deref());
    inputs.extend(config);
    let outputs: Vec<&Path> =
        std::iter::once(a.db.as_path()).chain(a.curve.as_deref()).chain(a.results.as_deref()).collect();
    check_outputs(&outputs, &inputs)?;
    let data_doc = read_input(&a.data)?;
    let agents_doc = read_input(&a.agents)?;
    let init_doc = a.init_db.as_deref().map(read_input).transpose()?;
    let s = settings(Mode::Train, config, Some(&agents_doc), flag_settings(&a.run, None)?)?;

    let tasks = parse_dataset(&data_doc).context("parsing dataset")?;
    let entries = parse_agent_config(&agents_doc).context("parsing agent pool")?;
    let embedder = make_embedder(&s)?;
    let mut db = match init_doc {
        Some(doc) => AgentDb::restore(&doc).context("restoring snapshot")?,
        None => db_from_entries(&entries, embedder.as_ref()).context("building agent database")?,
    };
    let backend = make_backend(&s, &db, Some(&entries))?;
    let crm = make_crm(&s)?;
    let decomposer = make_decomposer(&s)?;
    let pipeline = Pipeline::new(s.run.clone(), backend.as_ref(), crm.as_ref(), embedder.as_ref(), decomposer.as_ref())
        .map_err(|e| usage(e.to_string()))?;
    let report = pipeline.run_training(&tasks, &mut db).context("training")?;

    write_output(&a.db, &db.snapshot())?;
    if let Some(path) = &a.curve {
        write_output(path, &report.stats.curve_csv())?;
    }
    if let Some(path) = &a.results {
        write_output(path, &result_lines(&report.tasks))?;
    }
    summary("training", &report.stats);
    Ok(())
}

fn infer(a: InferArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&a.data, &a.db];
    inputs.extend(a.agents.as_deref());
    inputs.extend(config);
    check_outputs(&[&a.results], &inputs)?;
    let data_doc = read_input(&a.data)?;
    let db_doc = read_input(&a.db)?;
    let agents_doc = a.agents.as_deref().map(read_input).transpose()?;
    let s = settings(Mode::Infer, config, agents_doc.as_deref(), flag_settings(&a.run, None)?)?;

    let tasks = parse_dataset(&data_doc).context("parsing dataset")?;
    let db = AgentDb::restore(&db_doc).context("restoring snapshot")?;
    let entries = agents_doc.as_deref().map(parse_agent_config).transpose().context("parsing agent pool")?;
    let embedder = make_embedder(&s)?;
    let backend = make_backend(&s, &db, entries.as_deref())?;
    let crm = make_crm(&s)?;
    let decomposer = make_decomposer(&s)?;
    let pipeline = Pipeline::new(s.run.clone(), backend.as_ref(), crm.as_ref(), embedder.as_ref(), decomposer.as_ref())
        .map_err(|e| usage(e.to_string()))?;
    let report = pipeline.run_inference(&tasks, &db).context("inference")?;
    write_output(&a.results, &report.results_jsonl())?;
    summary("inference", &report.stats);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let results_doc = read_input(&a.results)?;
    let data_doc = read_input(&a.data)?;
    let results = parse_results(&results_doc).context("parsing results")?;
    let dataset = parse_dataset(&data_doc).context("parsing dataset")?;
    let report = evaluate(&results, &dataset).context("evaluating")?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    Ok(())
}

/// Agent table sorted by average reward, best first; ties by id.
pub fn agents_table(db: &AgentDb) -> String {
    let mut rows: Vec<_> = db.agents().iter().collect();
    rows.sort_by(|a, b| b.dynamic.avg_reward.total_cmp(&a.dynamic.avg_reward).then_with(|| a.id().cmp(b.id())));
    let mut out = format!("{:<24} {:<16} {:<28} {:>8} {:>8} {:>8}\n", "agent", "model", "role", "R", "C", "n");
    for a in rows {
        let s = &a.static_profile;
        out.push_str(&format!(
            "{:<24} {:<16} {:<28} {:>8.4} {:>8.4} {:>8}\n",
            s.agent_id, s.base_model, s.role, a.dynamic.avg_reward, a.dynamic.avg_cost, a.dynamic.count
        ));
    }
    out
}

fn agents(a: AgentsArgs) -> Result<(), CliError> {
    let doc = read_input(&a.db)?;
    let db = AgentDb::restore(&doc).context("restoring snapshot")?;
    print!("{}", agents_table(&db));
    Ok(())
}

fn demo(a: DemoArgs) -> Result<(), CliError> {
    if !a.out.is_dir() {
        return Err(usage(format!("output directory {} does not exist", a.out.display())));
    }
    if a.per_domain == 0 {
        return Err(usage("--per-domain must be at least 1"));
    }
    let pool: String = demo_pool(&DEMO_DOMAINS, a.per_domain, a.seed)
        .iter()
        .map(|item| serde_json::to_string(item).expect("pool item serializes") + "\n")
        .collect();
    let env = SkewedPool::default().build(a.seed);
    write_output(&a.out.join("pool.jsonl"), &pool)?;
    write_output(&a.out.join("agents.ini"), &env.to_ini())?;
    for (domain, expert) in &env.experts {
        eprintln!("{domain}: strongest agent is {expert}");
    }
    Ok(())
}
