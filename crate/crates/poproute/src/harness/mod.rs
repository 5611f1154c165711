//! Benchmark harness: evaluate a backend over whole datasets.
//!
//! A run loads one or more trajectory datasets, enumerates the eligible
//! queries for each requested mode ([`EvalMode::Search`] pairs answered by
//! history, [`EvalMode::Generate`] pairs only the road graph connects),
//! answers every query through the two-stage pipeline, scores the answers,
//! and writes per-query CSVs, an aggregate CSV, and a JSON report.
//!
//! Backends: `oracle` computes everything deterministically in-process;
//! `stub` drives the full prompt/reply machinery against a local
//! deterministic responder; `llm` talks to a chat-completion endpoint.

pub mod queries;
pub mod report;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Deserialize;
use thiserror::Error;

use crate::backend::{AgentBackend, LlmBackend, OracleBackend};
use crate::llm::{ChatClient, ChatEndpointConfig, LlmCache, StubTransport, TokenUsage};
use crate::metrics::{f1_score, traversability};
use crate::orchestrator::{Pipeline, PipelineOptions, RankContext};
use crate::trajectory::{
    canonical_popular_path, extract_ground_truth, ParseError, TrajectoryDataset, TrajectoryGraph,
};

pub use queries::{enumerate_queries, EvalMode};
pub use report::{
    join_flags, write_csv, write_json, JsonReport, ReportRow, RunEcho, TokenTotals,
};

// ===== Run configuration =====

/// Which answer machinery a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    /// Deterministic in-process computation; the reference answers.
    Oracle,
    /// Full prompt/reply round trip against a local deterministic
    /// responder; exercises everything but the network.
    Stub,
    /// A live chat-completion endpoint.
    Llm,
}

impl std::fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendChoice::Oracle => "oracle",
            BackendChoice::Stub => "stub",
            BackendChoice::Llm => "llm",
        })
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(BackendChoice::Oracle),
            "stub" => Ok(BackendChoice::Stub),
            "llm" => Ok(BackendChoice::Llm),
            other => Err(format!(
                "unknown backend {other:?} (expected \"oracle\", \"stub\", or \"llm\")"
            )),
        }
    }
}

/// Which query populations a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Search,
    Generate,
    Both,
}

impl RunMode {
    /// The populations to evaluate, in run order.
    pub fn modes(self) -> &'static [EvalMode] {
        match self {
            RunMode::Search => &[EvalMode::Search],
            RunMode::Generate => &[EvalMode::Generate],
            RunMode::Both => &[EvalMode::Search, EvalMode::Generate],
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Search => "search",
            RunMode::Generate => "generate",
            RunMode::Both => "both",
        })
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "search" => Ok(RunMode::Search),
            "generate" => Ok(RunMode::Generate),
            "both" => Ok(RunMode::Both),
            other => Err(format!(
                "unknown mode {other:?} (expected \"search\", \"generate\", or \"both\")"
            )),
        }
    }
}

/// Everything one evaluation run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Trajectory dataset files to evaluate.
    pub datasets: Vec<PathBuf>,
    pub backend: BackendChoice,
    /// Endpoint settings; required when `backend` is [`BackendChoice::Llm`].
    pub endpoint: Option<ChatEndpointConfig>,
    /// Reply cache directory for stub/llm backends.
    pub cache_dir: Option<PathBuf>,
    /// Treat trajectory segments as one-way (default) or two-way.
    pub directed: bool,
    /// Candidate routes requested from synthesis.
    pub k_candidates: usize,
    pub rank_context: RankContext,
    pub mode: RunMode,
    /// Cap on queries per dataset × mode (seeded subsample).
    pub limit: Option<usize>,
    pub seed: u64,
    /// Worker threads for answering queries.
    pub parallelism: usize,
    /// Where report files land.
    pub out_dir: PathBuf,
    /// Tag embedded in output filenames; defaults to the unix time.
    pub run_label: Option<String>,
}

impl RunConfig {
    pub fn new(datasets: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            datasets,
            backend: BackendChoice::Oracle,
            endpoint: None,
            cache_dir: None,
            directed: true,
            k_candidates: 3,
            rank_context: RankContext::Full,
            mode: RunMode::Search,
            limit: None,
            seed: 0,
            parallelism: 1,
            out_dir: out_dir.into(),
            run_label: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no datasets given")]
    NoDatasets,
    #[error("cannot read dataset {path}")]
    DatasetIo {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse dataset {path}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("dataset {dataset} has no eligible {mode} queries")]
    NoEligibleQueries { dataset: String, mode: EvalMode },
    #[error("backend setup failed for dataset {dataset}: {message}")]
    Backend { dataset: String, message: String },
    #[error("the llm backend needs an endpoint (base url and model)")]
    MissingEndpoint,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ===== TOML file configuration =====

/// `[run]` / `[endpoint]` sections of a TOML config file. Every field is
/// optional; command-line flags override whatever the file sets.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub endpoint: Option<EndpointSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub datasets: Option<Vec<PathBuf>>,
    pub backend: Option<String>,
    pub mode: Option<String>,
    pub directed: Option<bool>,
    pub k: Option<usize>,
    pub rank_context: Option<String>,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub out: Option<PathBuf>,
    pub label: Option<String>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub api_key_env: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| HarnessError::BadConfig(format!("{path:?}: {e}")))
    }
}

// ===== Running =====

/// What a finished run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub label: String,
    /// Aggregate rows (per dataset × mode, plus per-dataset call rows).
    pub aggregates: Vec<ReportRow>,
    /// Files written, per-query CSVs first, aggregate CSV and JSON last.
    pub files: Vec<PathBuf>,
    pub token_totals: TokenTotals,
    pub queries_run: usize,
    pub errors: usize,
}

struct DatasetOutcome {
    per_mode: Vec<(EvalMode, Vec<ReportRow>)>,
    aggregates: Vec<ReportRow>,
    usage: TokenUsage,
    queries: usize,
    errors: usize,
}

/// Evaluate `config.datasets` and write reports into `config.out_dir`.
pub fn run_eval(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    if config.datasets.is_empty() {
        return Err(HarnessError::NoDatasets);
    }
    let label = sanitize_component(
        &config
            .run_label
            .clone()
            .unwrap_or_else(|| unix_seconds().to_string()),
    );
    fs::create_dir_all(&config.out_dir)?;
    let backend_slug = config.backend.to_string();

    let mut all_rows: Vec<ReportRow> = Vec::new();
    let mut aggregates: Vec<ReportRow> = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();
    let mut usage = TokenUsage::zero();
    let mut queries_run = 0;
    let mut errors = 0;

    for path in &config.datasets {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::DatasetIo {
            path: path.clone(),
            source,
        })?;
        let dataset = TrajectoryDataset::parse(&text).map_err(|source| HarnessError::Dataset {
            path: path.clone(),
            source,
        })?;
        let graph = TrajectoryGraph::build(&dataset, config.directed);
        let stem = sanitize_component(
            &path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        );

        let outcome = match config.backend {
            BackendChoice::Oracle => {
                eval_dataset(&OracleBackend, &dataset, &graph, &stem, config)?
            }
            BackendChoice::Stub => {
                let transport =
                    StubTransport::new(dataset.clone(), config.directed, config.k_candidates);
                let client = ChatClient::new(
                    ChatEndpointConfig::new("stub://local", "stub-oracle"),
                    Arc::new(transport),
                    open_cache(config)?,
                );
                let backend = LlmBackend::new(client, "stub");
                eval_dataset(&backend, &dataset, &graph, &stem, config)?
            }
            BackendChoice::Llm => {
                let endpoint = config.endpoint.clone().ok_or(HarnessError::MissingEndpoint)?;
                let name = format!("llm:{}", endpoint.model);
                let backend =
                    LlmBackend::new(ChatClient::over_http(endpoint, open_cache(config)?), name);
                eval_dataset(&backend, &dataset, &graph, &stem, config)?
            }
        };

        for (mode, rows) in &outcome.per_mode {
            let file = config
                .out_dir
                .join(format!("{stem}__{backend_slug}__{mode}__{label}.queries.csv"));
            write_csv(&file, rows)?;
            files.push(file);
            all_rows.extend(rows.iter().cloned());
        }
        aggregates.extend(outcome.aggregates);
        usage = usage.accumulate(&outcome.usage);
        queries_run += outcome.queries;
        errors += outcome.errors;
    }

    let aggregate_path = config
        .out_dir
        .join(format!("aggregate__{backend_slug}__{label}.csv"));
    write_csv(&aggregate_path, &aggregates)?;
    files.push(aggregate_path);

    let token_totals = TokenTotals::from_usage(&usage);
    let json_path = config
        .out_dir
        .join(format!("report__{backend_slug}__{label}.json"));
    write_json(
        &json_path,
        &JsonReport {
            run: RunEcho {
                backend: backend_slug,
                mode: config.mode.to_string(),
                directed: config.directed,
                k_candidates: config.k_candidates,
                rank_context: config.rank_context.to_string(),
                seed: config.seed,
                limit: config.limit,
                parallelism: config.parallelism,
                label: label.clone(),
                datasets: config
                    .datasets
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect(),
            },
            rows: all_rows,
            aggregates: aggregates.clone(),
            token_totals: token_totals.clone(),
        },
    )?;
    files.push(json_path);

    Ok(RunSummary {
        label,
        aggregates,
        files,
        token_totals,
        queries_run,
        errors,
    })
}

fn open_cache(config: &RunConfig) -> Result<Option<LlmCache>, HarnessError> {
    config
        .cache_dir
        .as_ref()
        .map(|dir| LlmCache::open(dir).map_err(HarnessError::Io))
        .transpose()
}

/// Answer every eligible query of every requested mode on one dataset.
fn eval_dataset<B: AgentBackend>(
    backend: &B,
    dataset: &TrajectoryDataset,
    graph: &TrajectoryGraph,
    dataset_name: &str,
    config: &RunConfig,
) -> Result<DatasetOutcome, HarnessError> {
    let options = PipelineOptions {
        k_candidates: config.k_candidates,
        rank_context: config.rank_context,
    };
    let pipeline =
        Pipeline::new(backend, dataset, graph, options).map_err(|e| HarnessError::Backend {
            dataset: dataset_name.into(),
            message: e.to_string(),
        })?;
    let backend_name = backend.name();

    let mut per_mode = Vec::new();
    let mut aggregates = Vec::new();
    let mut usage = TokenUsage::zero();
    let mut queries_total = 0;
    let mut errors_total = 0;

    for &mode in config.mode.modes() {
        let queries = enumerate_queries(dataset, graph, mode, config.limit, config.seed);
        if queries.is_empty() {
            // A combined run simply skips an empty population; a run that
            // asked for exactly this population gets an error.
            if config.mode.modes().len() == 1 {
                return Err(HarnessError::NoEligibleQueries {
                    dataset: dataset_name.into(),
                    mode,
                });
            }
            continue;
        }
        let results = pipeline.run_batch(&queries, config.parallelism);

        let mut rows = Vec::with_capacity(results.len());
        let (mut f1_sum, mut f1_n) = (0.0, 0usize);
        let (mut trav_sum, mut trav_n) = (0.0, 0usize);
        let mut mode_usage = TokenUsage::zero();
        let mut mode_latency = 0u64;
        let mut mode_errors = 0usize;

        for (query, result) in queries.iter().zip(results) {
            match result {
                Ok(r) => {
                    let call_usage = r.usage();
                    mode_usage = mode_usage.accumulate(&call_usage);
                    mode_latency += r.latency_ms();
                    let f1 = match mode {
                        EvalMode::Search => {
                            let gt = extract_ground_truth(dataset, r.query);
                            let canonical = canonical_popular_path(&gt, graph)
                                .expect("search-eligible queries have ground truth");
                            Some(f1_score(&r.route, &canonical).2)
                        }
                        EvalMode::Generate => None,
                    };
                    let trav = traversability(&r.route, graph).ok();
                    if let Some(v) = f1 {
                        f1_sum += v;
                        f1_n += 1;
                    }
                    if let Some(v) = trav {
                        trav_sum += v;
                        trav_n += 1;
                    }
                    rows.push(ReportRow {
                        dataset: dataset_name.into(),
                        source: Some(query.source.0),
                        destination: Some(query.destination.0),
                        stage: r.stage.to_string(),
                        f1,
                        traversability: trav,
                        prompt_tokens: call_usage.prompt_tokens,
                        completion_tokens: call_usage.completion_tokens,
                        latency_ms: r.latency_ms(),
                        backend: backend_name.clone(),
                        flags: join_flags([
                            if r.fallback { "fallback" } else { "" },
                            if r.repaired { "repaired" } else { "" },
                        ]),
                    });
                }
                Err(e) => {
                    mode_errors += 1;
                    rows.push(ReportRow {
                        dataset: dataset_name.into(),
                        source: Some(query.source.0),
                        destination: Some(query.destination.0),
                        stage: "error".into(),
                        f1: None,
                        traversability: None,
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        latency_ms: 0,
                        backend: backend_name.clone(),
                        flags: format!("error={e}"),
                    });
                }
            }
        }

        let ok = rows.len() - mode_errors;
        aggregates.push(ReportRow {
            dataset: dataset_name.into(),
            source: None,
            destination: None,
            stage: mode.to_string(),
            f1: (f1_n > 0).then(|| f1_sum / f1_n as f64),
            traversability: (trav_n > 0).then(|| trav_sum / trav_n as f64),
            prompt_tokens: mode_usage.prompt_tokens,
            completion_tokens: mode_usage.completion_tokens,
            latency_ms: mode_latency,
            backend: backend_name.clone(),
            flags: format!("aggregate;queries={ok};errors={mode_errors}"),
        });
        usage = usage.accumulate(&mode_usage);
        queries_total += rows.len();
        errors_total += mode_errors;
        per_mode.push((mode, rows));
    }

    if per_mode.is_empty() {
        return Err(HarnessError::NoEligibleQueries {
            dataset: dataset_name.into(),
            mode: config.mode.modes()[0],
        });
    }

    // Calls charged once per dataset (the memoized POI ranking) get their
    // own aggregate-level row so token sums stay honest.
    let dataset_calls = pipeline.dataset_calls();
    if !dataset_calls.is_empty() {
        let call_usage = dataset_calls
            .iter()
            .fold(TokenUsage::zero(), |acc, c| acc.accumulate(&c.usage));
        let latency = dataset_calls.iter().map(|c| c.latency_ms).sum();
        usage = usage.accumulate(&call_usage);
        aggregates.push(ReportRow {
            dataset: dataset_name.into(),
            source: None,
            destination: None,
            stage: "dataset".into(),
            f1: None,
            traversability: None,
            prompt_tokens: call_usage.prompt_tokens,
            completion_tokens: call_usage.completion_tokens,
            latency_ms: latency,
            backend: backend_name,
            flags: format!("dataset-calls;calls={}", dataset_calls.len()),
        });
    }

    Ok(DatasetOutcome {
        per_mode,
        aggregates,
        usage,
        queries: queries_total,
        errors: errors_total,
    })
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Keep filenames portable: alphanumerics, `_`, and `-` survive, anything
/// else becomes `-`.
fn sanitize_component(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "run".into()
    } else {
        cleaned
    }
}
