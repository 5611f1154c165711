//! Every prompt the pipeline can send, rendered verbatim for one small
//! dataset: path discovery, POI ranking, edge ranking, path synthesis, and
//! path selection. Useful for eyeballing exactly what a model sees.
//!
//! Run: `cargo run -p poproute --example prompt_gallery`

use poproute::llm::{render_prompt, AgentKind, PromptContext};
use poproute::oracle::{rank_edges, rank_pois};
use poproute::trajectory::{
    extract_ground_truth, PoiId, Query, TrajectoryDataset, TrajectoryGraph,
};

fn main() {
    let text = "\
8 -> 9 -> 15
8 -> 9 -> 15
9 -> 16
16 -> 9 -> 15
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);
    let query = Query::new(PoiId(8), PoiId(15)).unwrap();

    let poi_order = rank_pois(&graph).ids();
    let edge_order = rank_edges(&graph).expect("dataset has segments").segments();
    let candidates = extract_ground_truth(&dataset, query);

    let contexts: [(AgentKind, PromptContext); 5] = [
        (
            AgentKind::Discovery,
            PromptContext {
                trajectories: Some(dataset.trajectories()),
                query: Some(query),
                ..Default::default()
            },
        ),
        (
            AgentKind::RankPoi,
            PromptContext {
                trajectories: Some(dataset.trajectories()),
                ..Default::default()
            },
        ),
        (
            AgentKind::RankEdge,
            PromptContext {
                trajectories: Some(dataset.trajectories()),
                ..Default::default()
            },
        ),
        (
            AgentKind::Synthesis,
            PromptContext {
                query: Some(query),
                edge_order: Some(&edge_order),
                ..Default::default()
            },
        ),
        (
            AgentKind::Selection,
            PromptContext {
                candidates: Some(candidates.routes()),
                poi_order: Some(&poi_order),
                ..Default::default()
            },
        ),
    ];

    for (kind, context) in &contexts {
        let prompt = render_prompt(*kind, context).expect("context carries every slot");
        println!("================ {kind} ================");
        println!("{prompt}");
    }
}
