//! Popular-path queries over historical movement data.
//!
//! Given a set of recorded trajectories (ordered POI visits), this crate
//! answers "what is the popular route from A to B?" with a two-stage
//! pipeline of cooperating agents:
//!
//! 1. **Retrieval** — extract every historical route connecting A to B and
//!    pick the most popular one.
//! 2. **Synthesis** — entered only when no historical route exists: rank
//!    road segments by popularity, stitch the top-k candidate routes
//!    through the segment graph, and pick the best.
//!
//! Both stages run against interchangeable backends: a deterministic
//! in-process **oracle** (the reference implementation), a **stub** that
//! drives the full prompt/reply machinery against a local deterministic
//! responder, and a live **chat-completion endpoint** with on-disk reply
//! caching. A benchmark harness scores any backend over whole datasets,
//! and a synthetic generator builds datasets with known popular structure.
//!
//! # Modules
//!
//! - [`trajectory`] — datasets, routes, queries, the segment graph, and
//!   ground-truth extraction.
//! - [`metrics`] — F1 and traversability scoring.
//! - [`oracle`] — deterministic discovery, ranking, synthesis, selection.
//! - [`llm`] — prompt templates, reply parsing, chat client, reply cache,
//!   and the deterministic stub transport.
//! - [`backend`] — the pluggable agent interface over oracle and LLM.
//! - [`orchestrator`] — the two-stage pipeline and batch runner.
//! - [`synthetic`] — seeded dataset generation.
//! - [`harness`] — dataset-scale evaluation with CSV/JSON reports.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//! `cargo run -p poproute --example <name>` with `quickstart`,
//! `generate_stage`, `rankings`, `prompt_gallery`, `synthetic_dataset`,
//! `stub_roundtrip`, `evaluate`, or `live_endpoint`.

pub mod backend;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod oracle;
pub mod orchestrator;
pub mod synthetic;
pub mod trajectory;

pub use backend::{AgentBackend, AgentCall, BackendError, LlmBackend, OracleBackend};
pub use metrics::{aggregate, f1_score, traversability, MetricReport};
pub use oracle::{
    discover_paths, rank_edges, rank_pois, select_path, synthesize_paths, EdgeRanking,
    PoiRanking,
};
pub use orchestrator::{
    Pipeline, PipelineError, PipelineOptions, QueryResult, RankContext, Stage,
};
pub use trajectory::{
    canonical_popular_path, extract_ground_truth, CandidateSet, PoiId, Query, RoadSegment,
    Route, Trajectory, TrajectoryDataset, TrajectoryGraph,
};
