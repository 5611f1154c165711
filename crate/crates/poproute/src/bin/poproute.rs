//! Command-line front end. All logic lives in the library; this file only
//! parses arguments, merges optional TOML config, calls the library, and
//! prints results.
//!
//! Exit codes: 0 success (and `--help`/`--version`), 1 usage errors,
//! 2 runtime failures.

use std::path::PathBuf;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use poproute::backend::{LlmBackend, OracleBackend};
use poproute::harness::{
    run_eval, BackendChoice, EndpointSection, FileConfig, RunConfig, RunMode, RunSummary,
};
use poproute::llm::{ChatClient, ChatEndpointConfig, LlmCache, StubTransport};
use poproute::oracle;
use poproute::orchestrator::{Pipeline, PipelineOptions, RankContext};
use poproute::synthetic::{generate_dataset, write_dataset_files, SyntheticConfig};
use poproute::trajectory::{PoiId, Query, TrajectoryDataset, TrajectoryGraph};

#[derive(Parser)]
#[command(
    name = "poproute",
    version,
    about = "Popular-route queries over historical POI trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a backend over datasets and write CSV/JSON reports.
    Eval(EvalArgs),
    /// Answer one source -> destination query.
    Query(QueryArgs),
    /// Print POI and road-segment popularity rankings for a dataset.
    Rank(RankArgs),
    /// Generate a synthetic dataset with known popular structure.
    Synth(SynthArgs),
    /// Inspect or manage the reply cache.
    Cache(CacheArgs),
    /// Parse datasets and report their shape.
    Validate(ValidateArgs),
}

/// Flags shared by eval and query for talking to a chat endpoint.
#[derive(Args, Debug, Default)]
struct EndpointArgs {
    /// Chat-completion endpoint base URL (e.g. https://api.example.com/v1).
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: Option<String>,
    /// Sampling temperature (default 0).
    #[arg(long)]
    temperature: Option<f64>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    api_key_env: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Trajectory dataset file; repeat for several.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// oracle | stub | llm
    #[arg(long)]
    backend: Option<String>,
    /// search | generate | both
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Candidate routes requested from synthesis.
    #[arg(long)]
    k: Option<usize>,
    /// Treat segments as two-way.
    #[arg(long, conflicts_with = "directed")]
    undirected: bool,
    /// Treat segments as one-way (the default).
    #[arg(long)]
    directed: bool,
    /// Cap on queries per dataset and mode (seeded subsample).
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for answering queries.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reply cache directory (stub/llm backends).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// full | filtered evidence for the POI-ranking agent.
    #[arg(long)]
    rank_context: Option<String>,
    /// Tag embedded in report filenames.
    #[arg(long)]
    label: Option<String>,
    /// TOML file with [run] and [endpoint] sections; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    source: u64,
    #[arg(long)]
    destination: u64,
    /// oracle | stub | llm
    #[arg(long, default_value = "oracle")]
    backend: String,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    undirected: bool,
    /// full | filtered evidence for the POI-ranking agent.
    #[arg(long, default_value = "full")]
    rank_context: String,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Print the full result as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    undirected: bool,
    /// Show only the top N entries of each ranking.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// POIs in the network.
    #[arg(long, default_value_t = 17)]
    nodes: usize,
    /// Trajectories to generate.
    #[arg(long, default_value_t = 1000)]
    trajectories: usize,
    /// Fraction of all possible edges to keep (default 0.2).
    #[arg(long)]
    density: Option<f64>,
    /// POIs the popular highway connects (default: a quarter of nodes).
    #[arg(long)]
    pivotal: Option<usize>,
    /// Probability of following the highway when possible (default 0.9).
    #[arg(long)]
    adherence: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file to write; stats land next to it as <out>.stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CacheArgs {
    /// Reply cache directory.
    #[arg(long)]
    cache_dir: PathBuf,
    #[command(subcommand)]
    command: CacheCommand,
}

#[derive(Subcommand, Debug)]
enum CacheCommand {
    /// Entry count and total size.
    Stats,
    /// Delete every cached reply.
    Clear,
    /// Bundle all entries into one JSON file.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    /// Load entries from a JSON bundle (re-keyed on import).
    Import {
        #[arg(long)]
        from: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Dataset file; repeat for several.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long)]
    undirected: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(message) = run(cli) {
        eprintln!("error: {message}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Eval(args) => cmd_eval(args),
        Command::Query(args) => cmd_query(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Cache(args) => cmd_cache(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

// ===== eval =====

fn cmd_eval(args: EvalArgs) -> Result<(), String> {
    let config = merge_eval_config(&args)?;
    let summary = run_eval(&config).map_err(|e| error_chain(&e))?;
    print_summary(&summary);
    Ok(())
}

/// File config supplies defaults; command-line flags win.
fn merge_eval_config(args: &EvalArgs) -> Result<RunConfig, String> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path).map_err(|e| error_chain(&e))?,
        None => FileConfig::default(),
    };
    let run = &file.run;

    let datasets = if args.datasets.is_empty() {
        run.datasets.clone().unwrap_or_default()
    } else {
        args.datasets.clone()
    };
    let backend: BackendChoice = args
        .backend
        .clone()
        .or_else(|| run.backend.clone())
        .unwrap_or_else(|| "oracle".into())
        .parse()?;
    let mode: RunMode = args
        .mode
        .clone()
        .or_else(|| run.mode.clone())
        .unwrap_or_else(|| "search".into())
        .parse()?;
    let rank_context: RankContext = args
        .rank_context
        .clone()
        .or_else(|| run.rank_context.clone())
        .unwrap_or_else(|| "full".into())
        .parse()?;
    let directed = if args.undirected {
        false
    } else if args.directed {
        true
    } else {
        run.directed.unwrap_or(true)
    };

    let endpoint = merge_endpoint(&args.endpoint, file.endpoint.as_ref());
    if backend == BackendChoice::Llm && endpoint.is_none() {
        return Err(
            "the llm backend needs --base-url and --model (or an [endpoint] config section)"
                .into(),
        );
    }

    let mut config = RunConfig::new(
        datasets,
        args.out
            .clone()
            .or_else(|| run.out.clone())
            .unwrap_or_else(|| PathBuf::from("eval-out")),
    );
    config.backend = backend;
    config.endpoint = endpoint;
    config.cache_dir = args.cache_dir.clone().or_else(|| run.cache_dir.clone());
    config.directed = directed;
    config.k_candidates = args.k.or(run.k).unwrap_or(3);
    config.rank_context = rank_context;
    config.mode = mode;
    config.limit = args.limit.or(run.limit);
    config.seed = args.seed.or(run.seed).unwrap_or(0);
    config.parallelism = args.parallelism.or(run.parallelism).unwrap_or(1);
    config.run_label = args.label.clone().or_else(|| run.label.clone());
    Ok(config)
}

/// Build an endpoint config when base URL and model are both known.
fn merge_endpoint(
    args: &EndpointArgs,
    file: Option<&EndpointSection>,
) -> Option<ChatEndpointConfig> {
    let pick = |cli: &Option<String>, file_val: Option<&String>| -> Option<String> {
        cli.clone().or_else(|| file_val.cloned())
    };
    let base_url = pick(&args.base_url, file.and_then(|f| f.base_url.as_ref()))?;
    let model = pick(&args.model, file.and_then(|f| f.model.as_ref()))?;
    let mut endpoint = ChatEndpointConfig::new(base_url, model);
    if let Some(t) = args.temperature.or(file.and_then(|f| f.temperature)) {
        endpoint.temperature = t;
    }
    if let Some(t) = file.and_then(|f| f.timeout_secs) {
        endpoint.timeout_secs = t;
    }
    if let Some(r) = file.and_then(|f| f.max_retries) {
        endpoint.max_retries = r;
    }
    if let Some(b) = file.and_then(|f| f.retry_backoff_ms) {
        endpoint.retry_backoff_ms = b;
    }
    endpoint.api_key_env = args
        .api_key_env
        .clone()
        .or_else(|| file.and_then(|f| f.api_key_env.clone()));
    Some(endpoint)
}

fn print_summary(summary: &RunSummary) {
    println!(
        "run {}: {} queries, {} errors",
        summary.label, summary.queries_run, summary.errors
    );
    for row in &summary.aggregates {
        let f1 = row
            .f1
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        let trav = row
            .traversability
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {} [{}] f1={} traversability={} tokens={}+{} latency={}ms ({})",
            row.dataset,
            row.stage,
            f1,
            trav,
            row.prompt_tokens,
            row.completion_tokens,
            row.latency_ms,
            row.flags
        );
    }
    println!(
        "tokens: {} prompt + {} completion ({})",
        summary.token_totals.prompt_tokens,
        summary.token_totals.completion_tokens,
        summary.token_totals.source
    );
    println!("files:");
    for file in &summary.files {
        println!("  {}", file.display());
    }
}

// ===== query =====

fn cmd_query(args: QueryArgs) -> Result<(), String> {
    let dataset = load_dataset(&args.dataset)?;
    let directed = !args.undirected;
    let graph = TrajectoryGraph::build(&dataset, directed);
    let query = Query::new(PoiId(args.source), PoiId(args.destination))
        .map_err(|e| e.to_string())?;
    let options = PipelineOptions {
        k_candidates: args.k,
        rank_context: args.rank_context.parse()?,
    };
    let cache = args
        .cache_dir
        .as_ref()
        .map(LlmCache::open)
        .transpose()
        .map_err(|e| e.to_string())?;

    let result = match args.backend.parse::<BackendChoice>()? {
        BackendChoice::Oracle => {
            let backend = OracleBackend;
            let pipeline = Pipeline::new(&backend, &dataset, &graph, options)
                .map_err(|e| error_chain(&e))?;
            pipeline.run_query(query).map_err(|e| error_chain(&e))?
        }
        BackendChoice::Stub => {
            let transport = StubTransport::new(dataset.clone(), directed, args.k);
            let client = ChatClient::new(
                ChatEndpointConfig::new("stub://local", "stub-oracle"),
                Arc::new(transport),
                cache,
            );
            let backend = LlmBackend::new(client, "stub");
            let pipeline = Pipeline::new(&backend, &dataset, &graph, options)
                .map_err(|e| error_chain(&e))?;
            pipeline.run_query(query).map_err(|e| error_chain(&e))?
        }
        BackendChoice::Llm => {
            let endpoint = merge_endpoint(&args.endpoint, None).ok_or_else(|| {
                "the llm backend needs --base-url and --model".to_string()
            })?;
            let name = format!("llm:{}", endpoint.model);
            let backend = LlmBackend::new(ChatClient::over_http(endpoint, cache), name);
            let pipeline = Pipeline::new(&backend, &dataset, &graph, options)
                .map_err(|e| error_chain(&e))?;
            pipeline.run_query(query).map_err(|e| error_chain(&e))?
        }
    };

    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&result).map_err(|e| e.to_string())?
        );
    } else {
        println!("route: {}", result.route);
        println!("stage: {}", result.stage);
        println!("candidates: {}", result.candidate_count);
        let usage = result.usage();
        println!(
            "tokens: {} prompt + {} completion, latency {}ms",
            usage.prompt_tokens,
            usage.completion_tokens,
            result.latency_ms()
        );
        for call in &result.calls {
            let mut notes = Vec::new();
            if call.memoized {
                notes.push("memoized");
            }
            if call.cache_hit {
                notes.push("cache-hit");
            }
            if call.repaired {
                notes.push("repaired");
            }
            if result.fallback && call.agent == poproute::llm::AgentKind::Synthesis {
                notes.push("fallback");
            }
            println!(
                "  {}: tokens={}+{} latency={}ms{}{}",
                call.agent,
                call.usage.prompt_tokens,
                call.usage.completion_tokens,
                call.latency_ms,
                if notes.is_empty() { "" } else { " " },
                notes.join(",")
            );
        }
    }
    Ok(())
}

// ===== rank =====

fn cmd_rank(args: RankArgs) -> Result<(), String> {
    let dataset = load_dataset(&args.dataset)?;
    let graph = TrajectoryGraph::build(&dataset, !args.undirected);
    let cap = args.top.unwrap_or(usize::MAX);

    let pois = oracle::rank_pois(&graph);
    println!("POI popularity ({} POIs):", pois.len());
    for (poi, freq) in pois.entries().iter().take(cap) {
        println!("  {poi}: {freq}");
    }
    match oracle::rank_edges(&graph) {
        Ok(edges) => {
            println!("Road-segment popularity ({} segments):", edges.entries().len());
            for (segment, freq) in edges.entries().iter().take(cap) {
                println!("  {segment}: {freq}");
            }
        }
        Err(e) => println!("Road-segment popularity: none ({e})"),
    }
    Ok(())
}

// ===== synth =====

fn cmd_synth(args: SynthArgs) -> Result<(), String> {
    let mut config = SyntheticConfig::for_scale(args.nodes, args.trajectories, args.seed);
    if let Some(d) = args.density {
        config.target_density = d;
    }
    if let Some(p) = args.pivotal {
        config.n_pivotal = p;
    }
    if let Some(a) = args.adherence {
        config.adherence = a;
    }
    let output = generate_dataset(&config).map_err(|e| e.to_string())?;
    let stats_path = write_dataset_files(&output, &args.out).map_err(|e| e.to_string())?;

    let stats = &output.stats;
    println!(
        "wrote {} trajectories over {} POIs to {}",
        stats.n_trajectories,
        stats.n_nodes,
        args.out.display()
    );
    println!(
        "network: {} edges (density {:.3}), connected: {}",
        stats.n_edges, stats.density, stats.connected
    );
    println!(
        "highway: {} pivotal POIs, {} edges",
        stats.pivotal.len(),
        stats.highway_edges.len()
    );
    match stats.measured_adherence {
        Some(measured) => println!(
            "adherence: target {:.2}, measured {:.3} over {} opportunities",
            stats.target_adherence, measured, stats.highway_opportunities
        ),
        None => println!("adherence: no highway opportunities arose"),
    }
    println!(
        "endpoints: {} unique pairs, mean trajectory length {:.2}",
        stats.unique_endpoint_pairs, stats.mean_trajectory_len
    );
    println!("stats: {}", stats_path.display());
    Ok(())
}

// ===== cache =====

fn cmd_cache(args: CacheArgs) -> Result<(), String> {
    let cache = LlmCache::open(&args.cache_dir).map_err(|e| e.to_string())?;
    match args.command {
        CacheCommand::Stats => {
            let stats = cache.stats().map_err(|e| e.to_string())?;
            println!("entries: {}", stats.entries);
            println!("bytes: {}", stats.bytes);
        }
        CacheCommand::Clear => {
            let removed = cache.clear().map_err(|e| e.to_string())?;
            println!("removed {removed} entries");
        }
        CacheCommand::Export { out } => {
            let exported = cache.export(&out).map_err(|e| e.to_string())?;
            println!("exported {exported} entries to {}", out.display());
        }
        CacheCommand::Import { from } => {
            let imported = cache.import(&from).map_err(|e| e.to_string())?;
            println!("imported {imported} entries from {}", from.display());
        }
    }
    Ok(())
}

// ===== validate =====

fn cmd_validate(args: ValidateArgs) -> Result<(), String> {
    for path in &args.datasets {
        let dataset = load_dataset(path)?;
        let graph = TrajectoryGraph::build(&dataset, !args.undirected);
        let lengths: Vec<usize> = dataset.trajectories().iter().map(|t| t.len()).collect();
        let mean_len = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
        println!("{}: ok", path.display());
        println!("  trajectories: {}", dataset.len());
        println!("  pois: {}", dataset.poi_universe().len());
        println!(
            "  segments: {} distinct ({})",
            graph.segments().count(),
            if graph.directed() {
                "directed"
            } else {
                "undirected"
            }
        );
        println!(
            "  trajectory length: mean {:.2}, min {}, max {}",
            mean_len,
            lengths.iter().min().unwrap(),
            lengths.iter().max().unwrap()
        );
    }
    Ok(())
}

// ===== helpers =====

fn load_dataset(path: &PathBuf) -> Result<TrajectoryDataset, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    TrajectoryDataset::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Render an error with its source chain, so a wrapped cause (parse line,
/// HTTP status) is visible.
fn error_chain(error: &dyn std::error::Error) -> String {
    let mut out = error.to_string();
    let mut cause = error.source();
    while let Some(c) = cause {
        out.push_str(": ");
        out.push_str(&c.to_string());
        cause = c.source();
    }
    out
}
