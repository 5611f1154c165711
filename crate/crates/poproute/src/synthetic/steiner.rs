//! The highway: a Steiner tree connecting the pivotal POIs.
//!
//! Built with the classic metric-closure 2-approximation: shortest-path
//! distances between all pivotal pairs form a complete weighted graph, its
//! minimum spanning tree is expanded back into base-graph paths, and the
//! union is reduced to a tree and pruned of non-pivotal leaves. Every step
//! breaks ties deterministically, so the tree is a pure function of the base
//! graph and the pivotal set.

use std::collections::{BTreeMap, BTreeSet};

use crate::trajectory::PoiId;

use super::graph::SimpleGraph;

/// A tree subgraph of the base graph spanning all pivotal POIs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighwayTree {
    adjacency: BTreeMap<PoiId, BTreeSet<PoiId>>,
    terminals: BTreeSet<PoiId>,
}

impl HighwayTree {
    pub fn contains(&self, v: PoiId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn nodes(&self) -> impl Iterator<Item = PoiId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn order(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: PoiId) -> impl Iterator<Item = PoiId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    /// The pivotal POIs this tree was built to connect.
    pub fn terminals(&self) -> &BTreeSet<PoiId> {
        &self.terminals
    }

    /// Tree edges as `(low, high)` pairs in sorted order.
    pub fn edges(&self) -> Vec<(PoiId, PoiId)> {
        let mut out = Vec::new();
        for (&v, nbrs) in &self.adjacency {
            for &w in nbrs {
                if v < w {
                    out.push((v, w));
                }
            }
        }
        out
    }

    /// Hop distances within the tree from `root` (only tree nodes appear).
    pub fn distances(&self, root: PoiId) -> BTreeMap<PoiId, u64> {
        let mut dist = BTreeMap::from([(root, 0u64)]);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for w in self.neighbors(v) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// The unique next hop from `v` toward `root`, given `dist` from
    /// [`HighwayTree::distances`] at that root.
    pub fn hop_toward(&self, v: PoiId, dist: &BTreeMap<PoiId, u64>) -> Option<PoiId> {
        let own = *dist.get(&v)?;
        if own == 0 {
            return None;
        }
        self.neighbors(v).find(|w| dist.get(w) == Some(&(own - 1)))
    }
}

struct UnionFind {
    parent: BTreeMap<PoiId, PoiId>,
}

impl UnionFind {
    fn new(nodes: impl IntoIterator<Item = PoiId>) -> Self {
        UnionFind {
            parent: nodes.into_iter().map(|v| (v, v)).collect(),
        }
    }

    fn find(&mut self, v: PoiId) -> PoiId {
        let p = self.parent[&v];
        if p == v {
            return v;
        }
        let root = self.find(p);
        self.parent.insert(v, root);
        root
    }

    fn union(&mut self, a: PoiId, b: PoiId) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent.insert(ra.max(rb), ra.min(rb));
        true
    }
}

/// Builds the highway tree over `terminals` (the pivotal POIs).
///
/// `base` must be connected and contain every terminal; panics otherwise,
/// since the synthetic generator guarantees both by construction.
pub fn steiner_tree(base: &SimpleGraph, terminals: &BTreeSet<PoiId>) -> HighwayTree {
    assert!(
        terminals.iter().all(|t| base.contains(*t)),
        "every terminal must be a base-graph node"
    );
    assert!(base.is_connected(), "base graph must be connected");
    assert!(terminals.len() >= 2, "a highway needs at least two terminals");

    // Shortest-path data from every terminal.
    let mut dist_from: BTreeMap<PoiId, BTreeMap<PoiId, u64>> = BTreeMap::new();
    let mut parents_from: BTreeMap<PoiId, BTreeMap<PoiId, PoiId>> = BTreeMap::new();
    for &t in terminals {
        dist_from.insert(t, base.distances(t));
        parents_from.insert(t, base.bfs_parents(t));
    }

    // Metric closure MST over the terminals (Kruskal; ties by endpoint ids).
    let mut closure: Vec<(u64, PoiId, PoiId)> = Vec::new();
    let terminal_list: Vec<PoiId> = terminals.iter().copied().collect();
    for (i, &a) in terminal_list.iter().enumerate() {
        for &b in &terminal_list[i + 1..] {
            closure.push((dist_from[&a][&b], a, b));
        }
    }
    closure.sort();
    let mut uf = UnionFind::new(terminal_list.iter().copied());
    let mut closure_mst: Vec<(PoiId, PoiId)> = Vec::new();
    for (_, a, b) in closure {
        if uf.union(a, b) {
            closure_mst.push((a, b));
        }
    }

    // Expand each closure edge into its base-graph shortest path (walking
    // the deterministic BFS parents from its first endpoint).
    let mut expansion: BTreeSet<(PoiId, PoiId)> = BTreeSet::new();
    for (a, b) in closure_mst {
        let parents = &parents_from[&a];
        let mut v = b;
        while v != a {
            let p = parents[&v];
            expansion.insert((v.min(p), v.max(p)));
            v = p;
        }
    }

    // The union of paths can contain cycles; keep a deterministic spanning
    // tree of it (Kruskal over sorted edges).
    let mut expansion_nodes: BTreeSet<PoiId> = BTreeSet::new();
    for &(a, b) in &expansion {
        expansion_nodes.insert(a);
        expansion_nodes.insert(b);
    }
    let mut uf = UnionFind::new(expansion_nodes.iter().copied());
    let mut adjacency: BTreeMap<PoiId, BTreeSet<PoiId>> = BTreeMap::new();
    for &(a, b) in &expansion {
        if uf.union(a, b) {
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
    }

    // Prune non-terminal leaves until none remain.
    loop {
        let prune: Vec<PoiId> = adjacency
            .iter()
            .filter(|(v, nbrs)| nbrs.len() <= 1 && !terminals.contains(v))
            .map(|(&v, _)| v)
            .collect();
        if prune.is_empty() {
            break;
        }
        for v in prune {
            if let Some(nbrs) = adjacency.remove(&v) {
                for w in nbrs {
                    if let Some(back) = adjacency.get_mut(&w) {
                        back.remove(&v);
                    }
                }
            }
        }
    }

    let tree = HighwayTree {
        adjacency,
        terminals: terminals.clone(),
    };
    debug_assert!(tree_invariants_hold(&tree));
    tree
}

fn tree_invariants_hold(tree: &HighwayTree) -> bool {
    let nodes = tree.order();
    let edges = tree.edges().len();
    if nodes == 0 || edges != nodes - 1 {
        return false;
    }
    let root = tree.nodes().next().unwrap();
    tree.distances(root).len() == nodes && tree.terminals.iter().all(|t| tree.contains(*t))
}
