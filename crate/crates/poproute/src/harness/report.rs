//! Benchmark report rows and writers.
//!
//! One row per evaluated query, plus aggregate rows (per dataset × mode)
//! and dataset-level rows for calls made once per dataset rather than per
//! query. The same rows serialize to CSV (flat, spreadsheet-friendly) and
//! to a JSON report that also echoes the run configuration and token
//! totals.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{TokenUsage, UsageSource};

/// One line of a benchmark report. Aggregate and dataset-level rows leave
/// `source`/`destination` empty and say what they are in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub source: Option<u64>,
    pub destination: Option<u64>,
    /// `search`, `generate`, `error`, or `dataset` for per-dataset calls.
    pub stage: String,
    /// Retrieval-quality F1 against the most popular historical route;
    /// empty for synthesized routes, which have no historical answer.
    pub f1: Option<f64>,
    pub traversability: Option<f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub backend: String,
    /// Semicolon-joined markers: `fallback`, `repaired`, `aggregate;...`,
    /// `error=<message>`.
    pub flags: String,
}

/// The run configuration echoed into the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub backend: String,
    pub mode: String,
    pub directed: bool,
    pub k_candidates: usize,
    pub rank_context: String,
    pub seed: u64,
    pub limit: Option<usize>,
    pub parallelism: usize,
    pub label: String,
    pub datasets: Vec<String>,
}

/// Token spend across the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// `provider` when every count came from the provider, else
    /// `heuristic` (characters / 4, rounded up).
    pub source: String,
}

impl TokenTotals {
    pub fn from_usage(usage: &TokenUsage) -> Self {
        TokenTotals {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            source: match usage.source {
                UsageSource::Provider => "provider".into(),
                UsageSource::Heuristic => "heuristic".into(),
            },
        }
    }
}

/// Everything a run produced, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub run: RunEcho,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<ReportRow>,
    pub token_totals: TokenTotals,
}

/// Join flag markers with `;`, skipping empties.
pub fn join_flags<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(";")
}

/// Write rows as CSV with one header line.
pub fn write_csv(path: &Path, rows: &[ReportRow]) -> io::Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(io::Error::other)?;
    for row in rows {
        writer.serialize(row).map_err(io::Error::other)?;
    }
    writer.flush()
}

/// Write the full report as pretty-printed JSON.
pub fn write_json(path: &Path, report: &JsonReport) -> io::Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, report).map_err(io::Error::other)
}
