//! The trajectory walker: one agent walking from source to destination,
//! preferring the highway tree with a configurable adherence probability.
//!
//! At every step the walker first looks for a *highway hop*: if it stands on
//! the tree, is not yet at the tree's exit (the tree node closest to the
//! destination), and the unique tree edge toward that exit leads to an
//! unvisited node from which the destination is still reachable, that hop is
//! an *opportunity*. With probability `adherence` it takes it; otherwise —
//! and whenever no highway hop exists — it takes a *shortcut*: the unvisited
//! base-graph neighbor closest to the destination (avoiding everything
//! already visited), ties broken uniformly at random.
//!
//! The reachability guard keeps one invariant: the destination always stays
//! reachable through unvisited nodes. Walks therefore never get stuck, never
//! revisit a node, and always terminate at the destination. With adherence 0
//! every walk is a shortest path; with adherence 1 between two pivotal POIs
//! it is exactly the tree path.

use std::collections::BTreeSet;

use rand::Rng;

use crate::trajectory::PoiId;

use super::graph::SimpleGraph;
use super::steiner::HighwayTree;

/// How many highway opportunities a walk saw and how many it took. The
/// measured adherence of a batch is `taken / opportunities` — a conditional
/// statistic over steps where the highway was actually available.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalkCounters {
    pub opportunities: u64,
    pub taken: u64,
}

impl WalkCounters {
    pub fn absorb(&mut self, other: WalkCounters) {
        self.opportunities += other.opportunities;
        self.taken += other.taken;
    }
}

/// Walk from `source` to `destination`. See the module docs for the policy.
///
/// `base` must be connected and contain both endpoints, which must differ;
/// `adherence` must lie in `[0, 1]`. The caller (the generator) validates
/// all of this, so violations here are bugs and panic.
pub fn synthesize_trajectory(
    base: &SimpleGraph,
    tree: &HighwayTree,
    source: PoiId,
    destination: PoiId,
    adherence: f64,
    rng: &mut impl Rng,
) -> (Vec<PoiId>, WalkCounters) {
    assert_ne!(source, destination, "endpoints must differ");
    assert!(base.contains(source) && base.contains(destination));

    // The exit: the tree node nearest the destination in the base graph
    // (ties to the smallest id). If the destination is pivotal-adjacent
    // enough to sit on the tree itself, the exit is the destination.
    let base_dist_to_destination = base.distances(destination);
    let exit = tree
        .nodes()
        .min_by_key(|v| (base_dist_to_destination.get(v).copied().unwrap_or(u64::MAX), *v))
        .expect("tree is never empty");
    let tree_dist_to_exit = tree.distances(exit);

    let mut counters = WalkCounters::default();
    let mut visited: BTreeSet<PoiId> = BTreeSet::new();
    let mut path = vec![source];
    let mut current = source;

    while current != destination {
        visited.insert(current);
        // Distances to the destination through unvisited nodes only.
        let avoid = base.distances_avoiding(destination, &visited);

        let highway_hop = if tree.contains(current) && current != exit {
            tree.hop_toward(current, &tree_dist_to_exit)
                .filter(|h| !visited.contains(h) && avoid.contains_key(h))
        } else {
            None
        };

        let next = match highway_hop {
            Some(hop) => {
                counters.opportunities += 1;
                if rng.random_bool(adherence) {
                    counters.taken += 1;
                    hop
                } else {
                    shortcut_step(base, current, &visited, &avoid, rng)
                }
            }
            None => shortcut_step(base, current, &visited, &avoid, rng),
        };
        path.push(next);
        current = next;
    }
    (path, counters)
}

/// The unvisited neighbor of `current` closest to the destination through
/// unvisited nodes; ties are broken uniformly at random.
fn shortcut_step(
    base: &SimpleGraph,
    current: PoiId,
    visited: &BTreeSet<PoiId>,
    avoid: &std::collections::BTreeMap<PoiId, u64>,
    rng: &mut impl Rng,
) -> PoiId {
    let mut best: Vec<PoiId> = Vec::new();
    let mut best_dist = u64::MAX;
    for w in base.neighbors(current) {
        if visited.contains(&w) {
            continue;
        }
        let Some(&d) = avoid.get(&w) else { continue };
        match d.cmp(&best_dist) {
            std::cmp::Ordering::Less => {
                best_dist = d;
                best.clear();
                best.push(w);
            }
            std::cmp::Ordering::Equal => best.push(w),
            std::cmp::Ordering::Greater => {}
        }
    }
    assert!(
        !best.is_empty(),
        "invariant violated: destination unreachable through unvisited nodes"
    );
    best[rng.random_range(0..best.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::steiner::steiner_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poi(v: u64) -> PoiId {
        PoiId(v)
    }

    /// A 4x4 grid, nodes 1..=16 numbered row-major.
    fn grid() -> SimpleGraph {
        let mut g = SimpleGraph::with_nodes(16);
        for row in 0..4u64 {
            for col in 0..4u64 {
                let v = row * 4 + col + 1;
                if col < 3 {
                    g.add_edge(poi(v), poi(v + 1));
                }
                if row < 3 {
                    g.add_edge(poi(v), poi(v + 4));
                }
            }
        }
        g
    }

    #[test]
    fn walks_are_loop_free_and_end_at_the_destination() {
        let g = grid();
        let tree = steiner_tree(&g, &BTreeSet::from([poi(1), poi(16)]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (s, d) in [(1u64, 16u64), (4, 13), (2, 15), (6, 11), (16, 1)] {
            for _ in 0..20 {
                let (path, _) =
                    synthesize_trajectory(&g, &tree, poi(s), poi(d), 0.7, &mut rng);
                assert_eq!(path.first(), Some(&poi(s)));
                assert_eq!(path.last(), Some(&poi(d)));
                let unique: BTreeSet<_> = path.iter().collect();
                assert_eq!(unique.len(), path.len(), "walk revisited a node");
                for pair in path.windows(2) {
                    assert!(g.has_edge(pair[0], pair[1]), "walk left the graph");
                }
            }
        }
    }

    #[test]
    fn zero_adherence_walks_are_shortest_paths() {
        let g = grid();
        let tree = steiner_tree(&g, &BTreeSet::from([poi(1), poi(16)]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (s, d) in [(1u64, 16u64), (5, 12), (13, 4), (2, 16)] {
            let want = g.distances(poi(d))[&poi(s)] as usize + 1;
            for _ in 0..10 {
                let (path, counters) =
                    synthesize_trajectory(&g, &tree, poi(s), poi(d), 0.0, &mut rng);
                assert_eq!(path.len(), want, "{s}->{d} must take a shortest path");
                assert_eq!(counters.taken, 0);
            }
        }
    }

    #[test]
    fn full_adherence_between_pivotal_nodes_walks_the_tree_path() {
        let g = grid();
        let terminals = BTreeSet::from([poi(1), poi(16), poi(4)]);
        let tree = steiner_tree(&g, &terminals);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (path, counters) =
            synthesize_trajectory(&g, &tree, poi(1), poi(16), 1.0, &mut rng);
        // The walk follows tree edges the whole way.
        for pair in path.windows(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            assert!(
                tree.edges().contains(&(a, b)),
                "step {a}->{b} left the highway"
            );
        }
        // And the tree path between two nodes of a tree is unique, so its
        // length is the tree distance.
        let dist = tree.distances(poi(16));
        assert_eq!(path.len() as u64, dist[&poi(1)] + 1);
        assert_eq!(counters.taken, counters.opportunities);
    }

    #[test]
    fn off_tree_sources_still_reach_the_destination() {
        let g = grid();
        // Tree along the top row only.
        let tree = steiner_tree(&g, &BTreeSet::from([poi(1), poi(4)]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (path, _) = synthesize_trajectory(&g, &tree, poi(13), poi(16), 0.9, &mut rng);
        assert_eq!(path.first(), Some(&poi(13)));
        assert_eq!(path.last(), Some(&poi(16)));
    }

    #[test]
    fn measured_adherence_tracks_the_coin_over_many_walks() {
        let g = grid();
        let tree = steiner_tree(&g, &BTreeSet::from([poi(1), poi(16), poi(13), poi(4)]));
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut total = WalkCounters::default();
        for _ in 0..600 {
            let (_, counters) =
                synthesize_trajectory(&g, &tree, poi(1), poi(16), 0.9, &mut rng);
            total.absorb(counters);
        }
        assert!(total.opportunities > 1000, "grid walks see plenty of highway");
        let measured = total.taken as f64 / total.opportunities as f64;
        assert!(
            (measured - 0.9).abs() < 0.03,
            "measured {measured} strays from the 0.9 coin"
        );
    }

    #[test]
    fn walker_is_deterministic_per_rng_stream() {
        let g = grid();
        let tree = steiner_tree(&g, &BTreeSet::from([poi(1), poi(16)]));
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| synthesize_trajectory(&g, &tree, poi(1), poi(16), 0.5, &mut rng).0)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }
}
