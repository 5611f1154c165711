//! Prompt templates for the five agent roles.
//!
//! The wording below is a fixed contract: tests assert on exact phrases, and
//! the stub transport recognises each role by its opening line. Every prompt
//! ends with the same closing instruction followed by the JSON schema the
//! reply must follow.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trajectory::{PoiId, Query, RoadSegment, Route, Trajectory};

use super::LlmError;

/// The five agent roles in the two-stage pipeline.
///
/// `Discovery`, `RankPoi`, and `Selection` make up the search stage;
/// `RankEdge` and `Synthesis` run only when discovery comes back empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Discovery,
    RankPoi,
    RankEdge,
    Synthesis,
    Selection,
}

impl AgentKind {
    /// The JSON field of the reply that carries the machine-readable answer
    /// (the other fields are free-form reasoning text).
    pub fn reply_field(self) -> &'static str {
        match self {
            AgentKind::Discovery => "candidate_paths",
            AgentKind::RankPoi => "poi_rank",
            AgentKind::RankEdge => "edge_rank",
            AgentKind::Synthesis => "generated_paths",
            AgentKind::Selection => "ranked_paths",
        }
    }

    /// Stable lowercase label used in logs, error messages, and reports.
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Discovery => "path-discovery",
            AgentKind::RankPoi => "poi-ranking",
            AgentKind::RankEdge => "edge-ranking",
            AgentKind::Synthesis => "path-synthesis",
            AgentKind::Selection => "path-selection",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Inputs available to [`render_prompt`]. Each agent kind reads only the
/// slots it needs and errors with [`LlmError::MissingSlot`] when one is
/// absent, so a single context type serves all five roles.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptContext<'a> {
    /// Historical trajectories, one per line (discovery and ranking roles).
    pub trajectories: Option<&'a [Trajectory]>,
    /// Source/destination pair (discovery and synthesis).
    pub query: Option<Query>,
    /// POI ids ordered most- to least-popular (selection).
    pub poi_order: Option<&'a [PoiId]>,
    /// Directed edges ordered most- to least-popular (synthesis).
    pub edge_order: Option<&'a [RoadSegment]>,
    /// Candidate routes to be ranked (selection).
    pub candidates: Option<&'a [Route]>,
}

const CLOSING: &str = "---------------\n\nImportant: Your response must follow the following JSON format:\n\n";

fn missing(kind: AgentKind, slot: &'static str) -> LlmError {
    LlmError::MissingSlot { kind, slot }
}

fn trajectory_block(lines: &[Trajectory]) -> String {
    let mut block = String::new();
    for t in lines {
        block.push_str(&t.to_string());
        block.push('\n');
    }
    block
}

/// Render the full prompt text for one agent role.
pub fn render_prompt(kind: AgentKind, ctx: &PromptContext<'_>) -> Result<String, LlmError> {
    match kind {
        AgentKind::Discovery => {
            let trajectories = ctx.trajectories.ok_or_else(|| missing(kind, "trajectories"))?;
            let query = ctx.query.ok_or_else(|| missing(kind, "query"))?;
            Ok(format!(
                "You are given a list of historical trajectories and a source-destination pair. \
                 Your task is to extract all candidate paths that connect the source to the destination.\n\n\
                 Historical Trajectories:\n{traj}\n\
                 Source: {source}\n\
                 Destination: {destination}\n\n\
                 {CLOSING}\
                 {{\n  \
                 \"identification_process\": \"Explain how we can identify existing paths from historical data that contain both source and destination.\",\n  \
                 \"candidate_paths\": \"Retrieve all possible routes connecting the source and destination from the historical data.\"\n\
                 }}\n",
                traj = trajectory_block(trajectories),
                source = query.source,
                destination = query.destination,
            ))
        }
        AgentKind::RankPoi | AgentKind::RankEdge => {
            let trajectories = ctx.trajectories.ok_or_else(|| missing(kind, "trajectories"))?;
            let subject = if kind == AgentKind::RankPoi {
                "POIs"
            } else {
                "POI Pairs (Edges)"
            };
            let schema = if kind == AgentKind::RankPoi {
                "{\n  \
                 \"calculation_method\": \"Step by step explain how the popularity of various points of interest (POIs) can be analyzed using historical trajectory data.\",\n  \
                 \"ranking_analysis\": \"Analyze the ranking the POIs based on their frequency of visits or interactions in the dataset and provide the ranking.\",\n  \
                 \"poi_rank\": \"Give out the POIs in the ascending order of rank.\"\n\
                 }"
            } else {
                "{\n  \
                 \"extracted_edges\": \"Extract edges that can be found from the trajectory data.\",\n  \
                 \"analysis_method\": \"How to analyze edge frequency and find the most popular edges.\",\n  \
                 \"edge_rank\": \"Give out the edges in (node1, node2) format in descending order of their popularity.\"\n\
                 }"
            };
            Ok(format!(
                "You are given historical trajectory data. Your task is to analyze and rank all {subject} \
                 based on their popularity.\n\n\
                 Historical Trajectories:\n{traj}\n\
                 {CLOSING}\
                 {schema}\n",
                traj = trajectory_block(trajectories),
            ))
        }
        AgentKind::Synthesis => {
            let query = ctx.query.ok_or_else(|| missing(kind, "query"))?;
            let edges = ctx.edge_order.ok_or_else(|| missing(kind, "edge_order"))?;
            let listing = edges
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            Ok(format!(
                "You are given edge popularity rankings. For a source-destination pair with no existing \
                 path in historical data, generate candidate paths.\n\n\
                 Source: {source}\n\
                 Destination: {destination}\n\n\
                 Edge Popularity Ranking: {listing}\n\n\
                 {CLOSING}\
                 {{\n  \
                 \"generation_strategy\": \"Explain the strategy for combining popular edges to create realistic paths.\",\n  \
                 \"generated_paths\": \"Generate possible path candidates using edge popularity rankings.\"\n\
                 }}\n",
                source = query.source,
                destination = query.destination,
            ))
        }
        AgentKind::Selection => {
            let candidates = ctx.candidates.ok_or_else(|| missing(kind, "candidates"))?;
            let order = ctx.poi_order.ok_or_else(|| missing(kind, "poi_order"))?;
            let mut candidate_block = String::new();
            for route in candidates {
                candidate_block.push_str(&route.to_string());
                candidate_block.push('\n');
            }
            let listing = order
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            Ok(format!(
                "You are given candidate paths extracted from historical data and POI popularity rankings. \
                 Your task is to rank these paths based on their popularity.\n\n\
                 Candidate Paths:\n{candidate_block}\n\
                 POI Popularity Ranking: {listing}\n\n\
                 {CLOSING}\
                 {{\n  \
                 \"evaluation_method\": \"Think step by step on how to evaluate paths using POI popularity rankings and retrieve the best path.\",\n  \
                 \"ranked_paths\": \"Rank all candidate paths based on the popularity of POIs they traverse.\"\n\
                 }}\n",
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryDataset;

    fn dataset() -> TrajectoryDataset {
        TrajectoryDataset::parse("1 -> 2 -> 3\n2 -> 3 -> 4\n").unwrap()
    }

    fn query() -> Query {
        Query::new(PoiId(1), PoiId(3)).unwrap()
    }

    #[test]
    fn discovery_prompt_carries_trajectories_query_and_schema() {
        let ds = dataset();
        let ctx = PromptContext {
            trajectories: Some(ds.trajectories()),
            query: Some(query()),
            ..Default::default()
        };
        let text = render_prompt(AgentKind::Discovery, &ctx).unwrap();
        assert!(text.starts_with(
            "You are given a list of historical trajectories and a source-destination pair."
        ));
        assert!(text.contains("Historical Trajectories:\n1 -> 2 -> 3\n2 -> 3 -> 4\n"));
        assert!(text.contains("Source: 1\nDestination: 3"));
        assert!(text.contains(
            "Important: Your response must follow the following JSON format:"
        ));
        assert!(text.contains("\"identification_process\""));
        assert!(text.contains("\"candidate_paths\""));
        assert!(text.contains("---------------"));
    }

    #[test]
    fn ranking_prompts_differ_only_in_subject_and_schema() {
        let ds = dataset();
        let ctx = PromptContext {
            trajectories: Some(ds.trajectories()),
            ..Default::default()
        };
        let poi = render_prompt(AgentKind::RankPoi, &ctx).unwrap();
        let edge = render_prompt(AgentKind::RankEdge, &ctx).unwrap();
        assert!(poi.contains("rank all POIs based on their popularity"));
        assert!(edge.contains("rank all POI Pairs (Edges) based on their popularity"));
        assert!(poi.contains("\"poi_rank\""));
        assert!(!poi.contains("\"edge_rank\""));
        assert!(edge.contains("\"edge_rank\""));
        assert!(edge.contains("\"extracted_edges\""));
        assert!(edge.contains("(node1, node2) format in descending order"));
    }

    #[test]
    fn synthesis_prompt_lists_edges_in_rank_order() {
        let edges = vec![
            RoadSegment::new(PoiId(16), PoiId(9)),
            RoadSegment::new(PoiId(10), PoiId(11)),
            RoadSegment::new(PoiId(5), PoiId(8)),
        ];
        let ctx = PromptContext {
            query: Some(Query::new(PoiId(1), PoiId(21)).unwrap()),
            edge_order: Some(&edges),
            ..Default::default()
        };
        let text = render_prompt(AgentKind::Synthesis, &ctx).unwrap();
        assert!(text.starts_with("You are given edge popularity rankings."));
        assert!(text.contains("Edge Popularity Ranking: (16,9), (10,11), (5,8)"));
        assert!(text.contains("Source: 1\nDestination: 21"));
        assert!(text.contains("\"generated_paths\""));
    }

    #[test]
    fn selection_prompt_lists_candidates_and_poi_order() {
        let routes = vec![
            Route::from_pois(vec![PoiId(1), PoiId(2), PoiId(3)]).unwrap(),
            Route::from_pois(vec![PoiId(1), PoiId(3)]).unwrap(),
        ];
        let order = vec![PoiId(8), PoiId(9), PoiId(15)];
        let ctx = PromptContext {
            candidates: Some(&routes),
            poi_order: Some(&order),
            ..Default::default()
        };
        let text = render_prompt(AgentKind::Selection, &ctx).unwrap();
        assert!(text.starts_with("You are given candidate paths extracted from historical data"));
        assert!(text.contains("Candidate Paths:\n1 -> 2 -> 3\n1 -> 3\n"));
        assert!(text.contains("POI Popularity Ranking: 8, 9, 15"));
        assert!(text.contains("\"ranked_paths\""));
    }

    #[test]
    fn missing_slots_error_with_kind_and_slot() {
        let err = render_prompt(AgentKind::Discovery, &PromptContext::default()).unwrap_err();
        match err {
            LlmError::MissingSlot { kind, slot } => {
                assert_eq!(kind, AgentKind::Discovery);
                assert_eq!(slot, "trajectories");
            }
            other => panic!("expected MissingSlot, got {other:?}"),
        }
        let ds = dataset();
        let err = render_prompt(
            AgentKind::Discovery,
            &PromptContext {
                trajectories: Some(ds.trajectories()),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, LlmError::MissingSlot { slot: "query", .. }));
    }

    #[test]
    fn every_prompt_ends_with_schema_after_separator() {
        let ds = dataset();
        let routes = vec![Route::from_pois(vec![PoiId(1), PoiId(3)]).unwrap()];
        let order = vec![PoiId(1), PoiId(3)];
        let edges = vec![RoadSegment::new(PoiId(1), PoiId(3))];
        let contexts = [
            (
                AgentKind::Discovery,
                PromptContext {
                    trajectories: Some(ds.trajectories()),
                    query: Some(query()),
                    ..Default::default()
                },
            ),
            (
                AgentKind::RankPoi,
                PromptContext {
                    trajectories: Some(ds.trajectories()),
                    ..Default::default()
                },
            ),
            (
                AgentKind::RankEdge,
                PromptContext {
                    trajectories: Some(ds.trajectories()),
                    ..Default::default()
                },
            ),
            (
                AgentKind::Synthesis,
                PromptContext {
                    query: Some(query()),
                    edge_order: Some(&edges),
                    ..Default::default()
                },
            ),
            (
                AgentKind::Selection,
                PromptContext {
                    candidates: Some(&routes),
                    poi_order: Some(&order),
                    ..Default::default()
                },
            ),
        ];
        for (kind, ctx) in contexts {
            let text = render_prompt(kind, &ctx).unwrap();
            let idx = text.find(CLOSING).unwrap_or_else(|| {
                panic!("{kind} prompt is missing the closing instruction")
            });
            let tail = &text[idx + CLOSING.len()..];
            assert!(tail.trim_start().starts_with('{'), "{kind} schema missing");
            assert!(tail.contains(&format!("\"{}\"", kind.reply_field())));
            assert!(tail.trim_end().ends_with('}'));
        }
    }
}
