//! Undirected base road network for the synthetic trajectory generator.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::trajectory::PoiId;

use super::SyntheticError;

/// A simple undirected graph over POIs `1..=n`. Adjacency is kept sorted so
/// every traversal is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    adjacency: BTreeMap<PoiId, BTreeSet<PoiId>>,
}

impl SimpleGraph {
    /// An edgeless graph over POIs `1..=n`.
    pub fn with_nodes(n: usize) -> Self {
        let adjacency = (1..=n as u64).map(|v| (PoiId(v), BTreeSet::new())).collect();
        SimpleGraph { adjacency }
    }

    pub fn nodes(&self) -> impl Iterator<Item = PoiId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn order(&self) -> usize {
        self.adjacency.len()
    }

    pub fn size(&self) -> usize {
        self.adjacency.values().map(|n| n.len()).sum::<usize>() / 2
    }

    pub fn contains(&self, v: PoiId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn neighbors(&self, v: PoiId) -> impl Iterator<Item = PoiId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, a: PoiId, b: PoiId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    pub fn add_edge(&mut self, a: PoiId, b: PoiId) {
        assert_ne!(a, b, "no self loops");
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn remove_edge(&mut self, a: PoiId, b: PoiId) {
        if let Some(n) = self.adjacency.get_mut(&a) {
            n.remove(&b);
        }
        if let Some(n) = self.adjacency.get_mut(&b) {
            n.remove(&a);
        }
    }

    /// Edges as `(low, high)` pairs in sorted order.
    pub fn edges(&self) -> Vec<(PoiId, PoiId)> {
        let mut out = Vec::with_capacity(self.size());
        for (&v, nbrs) in &self.adjacency {
            for &w in nbrs {
                if v < w {
                    out.push((v, w));
                }
            }
        }
        out
    }

    /// Edge count over the maximum possible for this node count.
    pub fn density(&self) -> f64 {
        let n = self.order();
        if n < 2 {
            return 0.0;
        }
        let max = n * (n - 1) / 2;
        self.size() as f64 / max as f64
    }

    /// Breadth-first hop distances from `from` to every reachable node,
    /// skipping nodes in `blocked`. `from` itself is never treated as
    /// blocked.
    pub fn distances_avoiding(
        &self,
        from: PoiId,
        blocked: &BTreeSet<PoiId>,
    ) -> BTreeMap<PoiId, u64> {
        let mut dist = BTreeMap::new();
        if !self.contains(from) {
            return dist;
        }
        dist.insert(from, 0);
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for w in self.neighbors(v) {
                if blocked.contains(&w) || dist.contains_key(&w) {
                    continue;
                }
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
        dist
    }

    /// Hop distances from `from` to every reachable node.
    pub fn distances(&self, from: PoiId) -> BTreeMap<PoiId, u64> {
        self.distances_avoiding(from, &BTreeSet::new())
    }

    /// BFS parents on shortest paths from `root` (deterministic: the first
    /// discovery in sorted adjacency order wins).
    pub fn bfs_parents(&self, root: PoiId) -> BTreeMap<PoiId, PoiId> {
        let mut parent = BTreeMap::new();
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if seen.insert(w) {
                    parent.insert(w, v);
                    queue.push_back(w);
                }
            }
        }
        parent
    }

    /// Whether every node is reachable from every other.
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.nodes().next() else {
            return true;
        };
        self.distances(start).len() == self.order()
    }
}

/// Generates a connected undirected graph over POIs `1..=n` with exactly
/// `round(target_density * n*(n-1)/2)` edges.
///
/// Starts from the complete graph and walks its edges once in a seeded
/// random order, deleting any edge whose removal keeps the graph connected,
/// until the target count is reached. One pass always suffices: an edge kept
/// because it was a bridge stays a bridge while later deletions only remove
/// more edges, and a connected graph above tree size always has a non-bridge
/// edge — so the pass cannot end above target.
pub fn generate_base_graph(
    n: usize,
    target_density: f64,
    rng: &mut impl Rng,
) -> Result<SimpleGraph, SyntheticError> {
    if n < 2 {
        return Err(SyntheticError::TooFewNodes { nodes: n });
    }
    if !(0.0..=1.0).contains(&target_density) || !target_density.is_finite() {
        return Err(SyntheticError::DensityOutOfRange {
            density: target_density,
        });
    }
    let max_edges = n * (n - 1) / 2;
    let target = (target_density * max_edges as f64).round() as usize;
    if target < n - 1 {
        return Err(SyntheticError::DensityTooSparse {
            density: target_density,
            minimum: (n as f64 - 1.0) / max_edges as f64,
        });
    }

    let mut graph = SimpleGraph::with_nodes(n);
    let mut edges = Vec::with_capacity(max_edges);
    for a in 1..=n as u64 {
        for b in (a + 1)..=n as u64 {
            graph.add_edge(PoiId(a), PoiId(b));
            edges.push((PoiId(a), PoiId(b)));
        }
    }
    edges.shuffle(rng);

    let mut remaining = max_edges;
    for (a, b) in edges {
        if remaining == target {
            break;
        }
        graph.remove_edge(a, b);
        if graph.is_connected() {
            remaining -= 1;
        } else {
            graph.add_edge(a, b);
        }
    }
    debug_assert_eq!(graph.size(), target);
    Ok(graph)
}
