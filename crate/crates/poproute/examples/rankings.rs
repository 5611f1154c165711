//! Popularity rankings and the comparator that turns them into one answer:
//! how POIs and road segments are scored, and how candidate routes are
//! ordered (score, then occurrences, then length, then lexicographic).
//!
//! Run: `cargo run -p poproute --example rankings`

use poproute::oracle::{rank_edges, rank_pois, select_path};
use poproute::trajectory::{
    extract_ground_truth, PoiId, Query, TrajectoryDataset, TrajectoryGraph,
};

fn main() {
    let text = "\
1 -> 2 -> 4
1 -> 3 -> 4
1 -> 2 -> 4
5 -> 2
5 -> 3
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);

    // POI popularity = total visits across all trajectories.
    let pois = rank_pois(&graph);
    println!("POI popularity:");
    for (poi, visits) in pois.entries() {
        println!("  {poi}: {visits} visit(s)");
    }

    // Segment popularity = how many trips used each consecutive pair.
    let edges = rank_edges(&graph).expect("dataset has segments");
    println!("\nroad-segment popularity:");
    for (segment, uses) in edges.entries() {
        println!("  {segment}: {uses} use(s)");
    }

    // Candidate routes from 1 to 4: [1,2,4] seen twice, [1,3,4] once.
    // POI 2 and POI 3 are equally popular (3 visits each), so the two
    // routes tie on summed score and the occurrence count decides.
    let query = Query::new(PoiId(1), PoiId(4)).unwrap();
    let candidates = extract_ground_truth(&dataset, query);
    println!("\ncandidates for {} to {}:", query.source, query.destination);
    for (route, occurrences) in candidates.iter() {
        let score: u64 = route
            .pois()
            .iter()
            .map(|p| pois.frequency_of(*p).unwrap_or(0))
            .sum();
        println!("  {route}   score={score} occurrences={occurrences}");
    }

    let ranked = select_path(&candidates, &pois).expect("candidates exist");
    println!("\nranked best-first:");
    for (route, score) in &ranked {
        println!("  {route}   score={score}");
    }
    println!("\nanswer: {}", ranked[0].0);
}
