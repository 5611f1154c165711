//! Query enumeration for benchmark runs.
//!
//! A dataset splits source/destination pairs into two populations: pairs
//! some historical trajectory already answers (exercising the retrieval
//! stage) and pairs no trajectory answers but the road graph connects
//! (exercising the synthesis stage). Enumeration is exhaustive and sorted;
//! an optional seeded subsample caps the count deterministically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trajectory::{PoiId, Query, TrajectoryDataset, TrajectoryGraph};

/// Which query population to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Pairs answered by at least one historical trajectory.
    Search,
    /// Pairs no trajectory answers but the graph connects.
    Generate,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Search => "search",
            EvalMode::Generate => "generate",
        })
    }
}

/// Enumerate every eligible query for `mode`, sorted by (source,
/// destination). `limit` keeps at most that many, chosen by a seeded
/// uniform subsample that preserves the sorted order.
pub fn enumerate_queries(
    dataset: &TrajectoryDataset,
    graph: &TrajectoryGraph,
    mode: EvalMode,
    limit: Option<usize>,
    seed: u64,
) -> Vec<Query> {
    let answered = answered_pairs(dataset);
    let pairs: BTreeSet<(PoiId, PoiId)> = match mode {
        EvalMode::Search => answered,
        EvalMode::Generate => {
            let reach = descendants(graph, dataset.poi_universe());
            dataset
                .poi_universe()
                .iter()
                .flat_map(|&s| {
                    let reach = &reach;
                    let answered = &answered;
                    dataset
                        .poi_universe()
                        .iter()
                        .filter(move |&&d| {
                            s != d
                                && !answered.contains(&(s, d))
                                && reach.get(&s).is_some_and(|set| set.contains(&d))
                        })
                        .map(move |&d| (s, d))
                })
                .collect()
        }
    };
    let mut queries: Vec<Query> = pairs
        .into_iter()
        .map(|(s, d)| Query::new(s, d).expect("enumeration never pairs a POI with itself"))
        .collect();
    if let Some(cap) = limit {
        if cap < queries.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, queries.len(), cap).into_vec();
            keep.sort_unstable();
            queries = keep.into_iter().map(|i| queries[i]).collect();
        }
    }
    queries
}

/// Ordered pairs (s, d) where d follows an occurrence of s in some
/// trajectory — exactly the pairs with a non-empty ground-truth window.
fn answered_pairs(dataset: &TrajectoryDataset) -> BTreeSet<(PoiId, PoiId)> {
    let mut pairs = BTreeSet::new();
    for t in dataset.trajectories() {
        let pois = t.pois();
        for i in 0..pois.len() {
            for j in i + 1..pois.len() {
                if pois[i] != pois[j] {
                    pairs.insert((pois[i], pois[j]));
                }
            }
        }
    }
    pairs
}

/// BFS descendants of every POI in `universe` (the POI itself excluded).
fn descendants(
    graph: &TrajectoryGraph,
    universe: &BTreeSet<PoiId>,
) -> BTreeMap<PoiId, BTreeSet<PoiId>> {
    universe
        .iter()
        .map(|&start| {
            let mut seen = BTreeSet::new();
            let mut frontier = VecDeque::from([start]);
            while let Some(v) = frontier.pop_front() {
                for &next in graph.successors(v) {
                    if next != start && seen.insert(next) {
                        frontier.push_back(next);
                    }
                }
            }
            (start, seen)
        })
        .collect()
}
