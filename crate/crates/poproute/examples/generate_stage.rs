//! What happens when history has no answer: the pipeline detects that no
//! recorded trajectory connects the endpoints, ranks road segments by
//! popularity, and synthesizes candidate routes through the segment graph.
//!
//! Run: `cargo run -p poproute --example generate_stage`

use poproute::backend::OracleBackend;
use poproute::oracle;
use poproute::orchestrator::{Pipeline, PipelineOptions, Stage};
use poproute::trajectory::{PoiId, Query, TrajectoryDataset, TrajectoryGraph};

fn main() {
    // Nobody has ever walked from 1 to 5 in one trip, but the segments to
    // get there all exist.
    let text = "\
1 -> 2 -> 3
1 -> 2 -> 3
2 -> 4 -> 5
3 -> 4
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);
    let query = Query::new(PoiId(1), PoiId(5)).unwrap();

    println!("historical trajectories:");
    for t in dataset.trajectories() {
        println!("  {t}");
    }

    // Stage 1 on its own: discovery comes back empty for this pair.
    let discovered = oracle::discover_paths(&dataset, query);
    println!(
        "\ndiscovery for {} to {}: {} candidate(s) — no single trip covers the pair",
        query.source,
        query.destination,
        discovered.len()
    );

    // Stage 2 inputs: segments ranked by how often trips used them.
    let edges = oracle::rank_edges(&graph).expect("dataset has segments");
    println!("\nroad segments by popularity:");
    for (segment, frequency) in edges.entries() {
        println!("  {segment}: used {frequency}x");
    }

    // Synthesis stitches k loop-free routes through the graph, weighting
    // each segment by its rank position (popular segments are cheap).
    let synthesized =
        oracle::synthesize_paths(&graph, query, &edges, 3).expect("endpoints are connected");
    println!("\nsynthesized candidates:");
    for (route, _) in synthesized.iter() {
        println!("  {route}");
    }

    // The full pipeline does all of that behind one call and reports which
    // stage answered.
    let backend = OracleBackend;
    let pipeline = Pipeline::new(&backend, &dataset, &graph, PipelineOptions::default())
        .expect("pipeline setup");
    let result = pipeline.run_query(query).expect("connected endpoints");
    assert_eq!(result.stage, Stage::Generate);

    println!("\npipeline answer: {} (stage: {})", result.route, result.stage);
    println!("agents invoked, in order:");
    for call in &result.calls {
        println!("  {}", call.agent);
    }
}
