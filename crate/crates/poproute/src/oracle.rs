//! Deterministic reference agents: frequency rankings, historical path
//! discovery, k-shortest loopless path synthesis over ranked edges, and
//! popularity-based path selection.
//!
//! These are exact computations over the trajectory data. The agent pipeline
//! can run entirely on them (ground truth for benchmarks), and the stub chat
//! endpoint serializes their outputs when exercising the LLM machinery.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{
    extract_ground_truth, order_by_popularity, CandidateSet, PoiId, Query, RoadSegment, Route,
    TrajectoryDataset, TrajectoryGraph,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("graph has no road segments to rank")]
    NoSegments,
    #[error("no path from {from} to {to} exists in the trajectory graph")]
    NoPathExists { from: PoiId, to: PoiId },
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("POI {0} is missing from the popularity ranking")]
    UnrankedPoi(PoiId),
}

// ===== Rankings =====

/// POIs ordered by descending visit frequency; ties by ascending id.
/// Covers exactly the POIs of the graph it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiRanking {
    entries: Vec<(PoiId, u64)>,
}

impl PoiRanking {
    pub fn entries(&self) -> &[(PoiId, u64)] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<PoiId> {
        self.entries.iter().map(|(p, _)| *p).collect()
    }

    pub fn frequency_of(&self, poi: PoiId) -> Option<u64> {
        self.entries.iter().find(|(p, _)| *p == poi).map(|(_, f)| *f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Road segments ordered by descending observation frequency; ties by
/// ascending (from, to). Covers exactly the segments of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRanking {
    entries: Vec<(RoadSegment, u64)>,
}

impl EdgeRanking {
    pub fn entries(&self) -> &[(RoadSegment, u64)] {
        &self.entries
    }

    pub fn segments(&self) -> Vec<RoadSegment> {
        self.entries.iter().map(|(s, _)| *s).collect()
    }

    /// 1-based rank position, which doubles as the segment's synthesis weight.
    pub fn position_of(&self, seg: RoadSegment) -> Option<u64> {
        self.entries
            .iter()
            .position(|(s, _)| *s == seg)
            .map(|i| i as u64 + 1)
    }

    /// Rebuilds a ranking from an ordered segment list (no frequencies, e.g.
    /// parsed back out of a prompt or reply). Positions still define weights;
    /// the stored frequency falls back to the reversed position so that order
    /// round-trips.
    pub fn from_ordered_segments(segments: Vec<RoadSegment>) -> Self {
        let n = segments.len() as u64;
        EdgeRanking {
            entries: segments
                .into_iter()
                .enumerate()
                .map(|(i, s)| (s, n - i as u64))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranks every POI of the graph by total visit count (multiplicity included).
pub fn rank_pois(graph: &TrajectoryGraph) -> PoiRanking {
    let mut entries: Vec<(PoiId, u64)> =
        graph.poi_freq().iter().map(|(p, f)| (*p, *f)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    PoiRanking { entries }
}

/// Ranks every road segment of the graph by observation count.
pub fn rank_edges(graph: &TrajectoryGraph) -> Result<EdgeRanking, OracleError> {
    if graph.segment_freq().is_empty() {
        return Err(OracleError::NoSegments);
    }
    let mut entries: Vec<(RoadSegment, u64)> =
        graph.segment_freq().iter().map(|(s, f)| (*s, *f)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(EdgeRanking { entries })
}

// ===== Discovery =====

/// The search stage's exact answer: every historical slice from source to
/// destination (see [`extract_ground_truth`]).
pub fn discover_paths(dataset: &TrajectoryDataset, query: Query) -> CandidateSet {
    extract_ground_truth(dataset, query)
}

// ===== Path synthesis (k-shortest loopless) =====

/// A route with its accumulated rank weight. Ordering is total: cheaper
/// first, then shorter, then lexicographic POI sequence; since a POI sequence
/// identifies a path, no two distinct paths compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
struct WeightedRoute {
    cost: u64,
    pois: Vec<PoiId>,
}

impl Ord for WeightedRoute {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .cmp(&other.cost)
            .then(self.pois.len().cmp(&other.pois.len()))
            .then(self.pois.cmp(&other.pois))
    }
}

impl PartialOrd for WeightedRoute {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generates up to `k` loop-free routes from source to destination using only
/// segments of the trajectory graph, ordered by ascending total weight where
/// a segment's weight is its 1-based position in the edge ranking.
///
/// The ordering is the total order of [`WeightedRoute`], so the output is the
/// unique k-prefix of all simple source→destination paths sorted by
/// (weight, length, POI sequence). Every emitted route is fully traversable
/// by construction.
pub fn synthesize_paths(
    graph: &TrajectoryGraph,
    query: Query,
    edges: &EdgeRanking,
    k: usize,
) -> Result<CandidateSet, OracleError> {
    debug_assert!(
        edges.entries().iter().all(|(s, _)| graph.has_segment(s.from, s.to)),
        "edge ranking must only contain graph segments"
    );
    let mut adjacency: BTreeMap<PoiId, Vec<(PoiId, u64)>> = BTreeMap::new();
    for (i, (seg, _)) in edges.entries().iter().enumerate() {
        adjacency.entry(seg.from).or_default().push((seg.to, i as u64 + 1));
    }
    for nbrs in adjacency.values_mut() {
        nbrs.sort(); // deterministic expansion order
    }

    let paths = k_shortest_loopless(&adjacency, query.source, query.destination, k);
    if paths.is_empty() {
        return Err(OracleError::NoPathExists {
            from: query.source,
            to: query.destination,
        });
    }
    let mut out = CandidateSet::empty(query);
    for wr in paths {
        let route = Route::from_pois(wr.pois).expect("synthesized paths are non-empty");
        out.insert(route).expect("synthesized paths connect the query endpoints");
    }
    Ok(out)
}

/// Yen-style enumeration of the k minimal simple paths under the
/// [`WeightedRoute`] total order.
fn k_shortest_loopless(
    adjacency: &BTreeMap<PoiId, Vec<(PoiId, u64)>>,
    source: PoiId,
    destination: PoiId,
    k: usize,
) -> Vec<WeightedRoute> {
    if k == 0 {
        return Vec::new();
    }
    let mut accepted: Vec<WeightedRoute> = Vec::new();
    let first = match best_path(adjacency, source, destination, &BTreeSet::new(), &BTreeSet::new())
    {
        Some(p) => p,
        None => return Vec::new(),
    };
    accepted.push(first);

    let mut candidates: BTreeSet<WeightedRoute> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().expect("at least one accepted path").clone();
        for i in 0..prev.pois.len() - 1 {
            let spur_node = prev.pois[i];
            let root = &prev.pois[..=i];

            // Ban the next edge of every accepted path sharing this root, so
            // the spur search is forced onto a new continuation.
            let mut banned_edges: BTreeSet<RoadSegment> = BTreeSet::new();
            for p in &accepted {
                if p.pois.len() > i + 1 && p.pois[..=i] == *root {
                    banned_edges.insert(RoadSegment::new(p.pois[i], p.pois[i + 1]));
                }
            }
            // Ban root nodes before the spur node to keep the result simple.
            let banned_nodes: BTreeSet<PoiId> = root[..i].iter().copied().collect();

            if let Some(spur) =
                best_path(adjacency, spur_node, destination, &banned_nodes, &banned_edges)
            {
                let root_cost: u64 = root
                    .windows(2)
                    .map(|w| edge_weight(adjacency, w[0], w[1]))
                    .sum();
                let mut pois = root[..i].to_vec();
                pois.extend_from_slice(&spur.pois);
                let total = WeightedRoute { cost: root_cost + spur.cost, pois };
                if !accepted.contains(&total) {
                    candidates.insert(total);
                }
            }
        }
        match candidates.pop_first() {
            Some(next) => accepted.push(next),
            None => break, // fewer than k simple paths exist
        }
    }
    accepted
}

fn edge_weight(adjacency: &BTreeMap<PoiId, Vec<(PoiId, u64)>>, from: PoiId, to: PoiId) -> u64 {
    adjacency
        .get(&from)
        .and_then(|nbrs| nbrs.iter().find(|(v, _)| *v == to))
        .map(|(_, w)| *w)
        .expect("accepted paths only use ranked edges")
}

/// Dijkstra over positive weights returning the minimal path under the
/// [`WeightedRoute`] total order (cost, then length, then POI sequence).
///
/// The heap holds whole partial paths; because the order is preserved under
/// extension, the first pop of a node carries its overall best path, so the
/// tie-break is exact rather than heuristic.
fn best_path(
    adjacency: &BTreeMap<PoiId, Vec<(PoiId, u64)>>,
    source: PoiId,
    destination: PoiId,
    banned_nodes: &BTreeSet<PoiId>,
    banned_edges: &BTreeSet<RoadSegment>,
) -> Option<WeightedRoute> {
    if banned_nodes.contains(&source) {
        return None;
    }
    let mut settled: BTreeSet<PoiId> = BTreeSet::new();
    let mut heap: BinaryHeap<std::cmp::Reverse<WeightedRoute>> = BinaryHeap::new();
    heap.push(std::cmp::Reverse(WeightedRoute { cost: 0, pois: vec![source] }));

    while let Some(std::cmp::Reverse(current)) = heap.pop() {
        let node = *current.pois.last().expect("paths are non-empty");
        if node == destination {
            return Some(current);
        }
        if !settled.insert(node) {
            continue;
        }
        if let Some(nbrs) = adjacency.get(&node) {
            for &(next, w) in nbrs {
                if settled.contains(&next) || banned_nodes.contains(&next) {
                    continue;
                }
                if banned_edges.contains(&RoadSegment::new(node, next)) {
                    continue;
                }
                let mut pois = current.pois.clone();
                pois.push(next);
                heap.push(std::cmp::Reverse(WeightedRoute { cost: current.cost + w, pois }));
            }
        }
    }
    None
}

// ===== Selection =====

/// Scores each candidate by the summed ranking frequency of its deduplicated
/// POI set and returns candidates ordered best first. The comparator is
/// shared with [`crate::trajectory::canonical_popular_path`], so the top
/// route of this ranking is that canonical answer whenever both see the same
/// inputs.
pub fn select_path(
    candidates: &CandidateSet,
    ranking: &PoiRanking,
) -> Result<Vec<(Route, u64)>, OracleError> {
    if candidates.is_empty() {
        return Err(OracleError::EmptyCandidates);
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (route, occ) in candidates.iter() {
        let mut score = 0u64;
        for p in route.poi_set() {
            score += ranking.frequency_of(p).ok_or(OracleError::UnrankedPoi(p))?;
        }
        scored.push((route.clone(), score, occ));
    }
    Ok(order_by_popularity(scored))
}
