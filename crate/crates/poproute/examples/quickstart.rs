//! The fastest path from data to an answer: load trajectories, ask for the
//! popular route between two POIs, and inspect how it was chosen.
//!
//! Run: `cargo run -p poproute --example quickstart`

use poproute::backend::OracleBackend;
use poproute::orchestrator::{Pipeline, PipelineOptions};
use poproute::trajectory::{extract_ground_truth, PoiId, Query, TrajectoryDataset, TrajectoryGraph};

fn main() {
    // Five recorded trips over a tiny park. Arrows read "visited next".
    let text = "\
1 -> 2 -> 3 -> 4
1 -> 2 -> 4
1 -> 2 -> 3 -> 4
2 -> 3 -> 5
4 -> 5
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);

    println!("historical trajectories:");
    for t in dataset.trajectories() {
        println!("  {t}");
    }

    // The pipeline wires four agents (discover, rank POIs, rank edges,
    // select) behind one call; the oracle backend computes their answers
    // deterministically in-process.
    let backend = OracleBackend;
    let pipeline = Pipeline::new(&backend, &dataset, &graph, PipelineOptions::default())
        .expect("pipeline setup");

    let query = Query::new(PoiId(1), PoiId(4)).unwrap();
    let result = pipeline.run_query(query).expect("answerable query");

    println!("\nquery: {} to {}", query.source, query.destination);
    println!("popular route: {}", result.route);
    println!(
        "answered by the {} stage from {} candidate route(s)",
        result.stage, result.candidate_count
    );

    // Why that route: every trajectory slice connecting 1 to 4, with
    // occurrence counts. Popularity = summed POI visit frequency, ties
    // broken by occurrences, then length, then lexicographic order.
    println!("\ncandidates found in history:");
    for (route, occurrences) in extract_ground_truth(&dataset, query).iter() {
        println!("  {route}   (seen {occurrences}x)");
    }
}
