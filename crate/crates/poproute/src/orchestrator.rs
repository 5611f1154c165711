//! The two-stage query pipeline.
//!
//! For each query: discover candidate routes in the historical trajectories
//! (the *search* stage); only when validated discovery comes back empty,
//! rank edges and synthesize candidates from popular segments (the
//! *generate* stage); then rank POIs, have the selection agent order the
//! candidates, and answer with the top route.
//!
//! The pipeline memoizes the POI ranking per dataset (it does not depend on
//! the query), logs every agent invocation, and can run query batches on a
//! bounded thread pool while preserving input order.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::backend::{AgentBackend, AgentCall, BackendError, PipelineInputs};
use crate::llm::{AgentKind, TokenUsage};
use crate::oracle;
use crate::trajectory::{Query, QueryError, Route, TrajectoryDataset, TrajectoryGraph};

/// Which stage answered a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// The route came from historical trajectories.
    Search,
    /// No historical route existed; the route was synthesized from popular
    /// segments.
    Generate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Search => "search",
            Stage::Generate => "generate",
        })
    }
}

/// What evidence the POI-ranking agent is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RankContext {
    /// All trajectories; the ranking is query-independent and memoized.
    #[default]
    Full,
    /// Only trajectories touching the query's endpoints; cheaper prompts,
    /// recomputed per query.
    Filtered,
}

impl std::str::FromStr for RankContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(RankContext::Full),
            "filtered" => Ok(RankContext::Filtered),
            other => Err(format!(
                "unknown rank context {other:?} (expected \"full\" or \"filtered\")"
            )),
        }
    }
}

impl fmt::Display for RankContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankContext::Full => "full",
            RankContext::Filtered => "filtered",
        })
    }
}

/// Pipeline tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// How many candidate routes synthesis asks for.
    pub k_candidates: usize,
    /// Evidence shown to the POI-ranking agent.
    pub rank_context: RankContext,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            k_candidates: 3,
            rank_context: RankContext::Full,
        }
    }
}

/// The pipeline's answer to one query, with full instrumentation.
#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub query: Query,
    /// The recommended route, best-first winner of selection.
    pub route: Route,
    pub stage: Stage,
    /// How many candidate routes selection chose between.
    pub candidate_count: usize,
    /// Every agent invocation this query triggered, in execution order.
    pub calls: Vec<AgentCall>,
    /// Synthesis came from the deterministic fallback because the agent
    /// returned nothing usable.
    pub fallback: bool,
    /// At least one reply needed repair or a re-prompt.
    pub repaired: bool,
    /// Backend label (`oracle`, `stub`, `llm:<model>`).
    pub backend: String,
}

impl QueryResult {
    /// Total token usage across all agent calls for this query.
    pub fn usage(&self) -> TokenUsage {
        self.calls
            .iter()
            .fold(TokenUsage::zero(), |acc, c| acc.accumulate(&c.usage))
    }

    /// Total latency across all agent calls for this query. Cached replies
    /// contribute the latency of the original live exchange.
    pub fn latency_ms(&self) -> u64 {
        self.calls.iter().map(|c| c.latency_ms).sum()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid query: {0}")]
    InvalidQuery(#[from] QueryError),
}

/// A backend bound to one dataset, ready to answer queries.
pub struct Pipeline<'a, B: AgentBackend> {
    backend: &'a B,
    io: PipelineInputs<'a>,
    options: PipelineOptions,
    /// POI ranking computed once per dataset in `Full` context. The call
    /// that produced it is kept for dataset-level accounting.
    memo_rank: Option<(B::PoiRank, AgentCall)>,
    /// Edge ranking computed by the first generate-stage query and reused by
    /// later ones. The producing query's log carries its cost; reuses log a
    /// zero-cost memo call.
    edge_memo: Mutex<Option<B::EdgeRank>>,
}

impl<'a, B: AgentBackend> Pipeline<'a, B> {
    /// Binds `backend` to a dataset/graph pair. In `Full` rank context the
    /// POI ranking is computed here, once; its cost is reported through
    /// [`Pipeline::dataset_calls`], and per-query logs record memo reuse.
    pub fn new(
        backend: &'a B,
        dataset: &'a TrajectoryDataset,
        graph: &'a TrajectoryGraph,
        options: PipelineOptions,
    ) -> Result<Self, PipelineError> {
        let io = PipelineInputs { dataset, graph };
        let memo_rank = match options.rank_context {
            RankContext::Full => Some(backend.rank_pois(&io, None)?),
            RankContext::Filtered => None,
        };
        Ok(Pipeline {
            backend,
            io,
            options,
            memo_rank,
            edge_memo: Mutex::new(None),
        })
    }

    pub fn options(&self) -> PipelineOptions {
        self.options
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    /// Agent calls made once per dataset rather than per query: currently
    /// the memoized POI ranking. Batch accounting is the sum of these and
    /// every per-query log, with nothing double-counted.
    pub fn dataset_calls(&self) -> Vec<AgentCall> {
        self.memo_rank
            .as_ref()
            .map(|(_, call)| vec![call.clone()])
            .unwrap_or_default()
    }

    /// Answer one query via the two-stage pipeline.
    pub fn run_query(&self, query: Query) -> Result<QueryResult, PipelineError> {
        query.validate_against(self.io.dataset)?;
        let mut calls = Vec::with_capacity(4);
        let mut fallback = false;

        // Stage 1: discover candidates in the historical trajectories.
        let (mut candidates, discovery_call) = self.backend.discover(&self.io, query)?;
        calls.push(discovery_call);

        // Stage 2, entered only when validated discovery is empty: rank
        // edges and synthesize candidates from popular segments.
        let stage = if candidates.is_empty() {
            let edges = {
                // Lock held across the ranking call on purpose: concurrent
                // first-time generate queries must not pay for it twice.
                let mut memo = self.edge_memo.lock().expect("edge memo lock");
                match memo.as_ref() {
                    Some(edges) => {
                        calls.push(AgentCall::memo(AgentKind::RankEdge));
                        edges.clone()
                    }
                    None => {
                        let (edges, call) = self.backend.rank_edges(&self.io)?;
                        calls.push(call);
                        *memo = Some(edges.clone());
                        edges
                    }
                }
            };
            let (synthesized, synth_call) =
                self.backend
                    .synthesize(&self.io, query, &edges, self.options.k_candidates)?;
            calls.push(synth_call);
            if synthesized.is_empty() {
                // The agent produced nothing usable; build the candidates
                // deterministically from the same edge evidence.
                fallback = true;
                let ranking = oracle::rank_edges(self.io.graph)
                    .map_err(|e| BackendError::agent(AgentKind::RankEdge, e))?;
                let built =
                    oracle::synthesize_paths(self.io.graph, query, &ranking, self.options.k_candidates)
                        .map_err(|e| match e {
                            oracle::OracleError::NoPathExists { from, to } => {
                                BackendError::NoPathExists { from, to }
                            }
                            other => BackendError::agent(AgentKind::Synthesis, other),
                        })?;
                let mut call = AgentCall::local(AgentKind::Synthesis, 0);
                call.repaired = true; // mark: agent output was unusable
                calls.push(call);
                candidates = built;
            } else {
                candidates = synthesized;
            }
            Stage::Generate
        } else {
            Stage::Search
        };

        // Rank POIs (memoized in Full context), then let selection order the
        // candidates; the answer is the top-ranked route.
        let ranking = match (&self.memo_rank, self.options.rank_context) {
            (Some((ranking, _)), RankContext::Full) => {
                calls.push(AgentCall::memo(AgentKind::RankPoi));
                ranking.clone()
            }
            _ => {
                let (ranking, call) = self.backend.rank_pois(&self.io, Some(query))?;
                calls.push(call);
                ranking
            }
        };
        let (ordered, select_call) = self.backend.select(&self.io, &candidates, &ranking)?;
        calls.push(select_call);
        let route = ordered
            .into_iter()
            .next()
            .expect("select never returns an empty order for non-empty candidates");

        let repaired = calls.iter().any(|c| c.repaired);
        Ok(QueryResult {
            query,
            route,
            stage,
            candidate_count: candidates.len(),
            calls,
            fallback,
            repaired,
            backend: self.backend.name(),
        })
    }

    /// Answer a batch of queries on up to `parallelism` worker threads.
    /// Results come back in input order regardless of completion order.
    pub fn run_batch(
        &self,
        queries: &[Query],
        parallelism: usize,
    ) -> Vec<Result<QueryResult, PipelineError>> {
        if queries.is_empty() {
            return Vec::new();
        }
        let workers = parallelism.clamp(1, queries.len());
        if workers == 1 {
            return queries.iter().map(|q| self.run_query(*q)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<QueryResult, PipelineError>>>> =
            (0..queries.len()).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= queries.len() {
                        break;
                    }
                    let result = self.run_query(queries[i]);
                    *slots[i].lock().expect("result slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("result slot lock")
                    .expect("every slot filled by a worker")
            })
            .collect()
    }
}
