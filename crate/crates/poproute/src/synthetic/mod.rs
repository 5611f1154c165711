//! Synthetic trajectory generator.
//!
//! Builds a connected random road network of a target density, designates a
//! few *pivotal* POIs joined by a highway (a Steiner tree over the network),
//! and walks agents between endpoint pairs. Walkers prefer the highway with
//! a configurable adherence probability and otherwise cut toward their
//! destination, producing datasets whose popular paths concentrate on the
//! highway — the structure the query pipeline is designed to recover.
//!
//! Everything is driven by one seeded generator, so a configuration
//! reproduces its dataset bit-for-bit.

pub mod graph;
pub mod steiner;
pub mod walker;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{PoiId, Trajectory, TrajectoryDataset};

pub use graph::{generate_base_graph, SimpleGraph};
pub use steiner::{steiner_tree, HighwayTree};
pub use walker::{synthesize_trajectory, WalkCounters};

/// How much likelier a pivotal POI is to be drawn as a trajectory endpoint
/// than an ordinary one. Pivotal POIs are the places people travel between,
/// so endpoint mass concentrates there; this also keeps the number of
/// distinct endpoint pairs realistic for heavily sampled datasets.
const PIVOTAL_ENDPOINT_WEIGHT: u64 = 6;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("a network needs at least 2 nodes, got {nodes}")]
    TooFewNodes { nodes: usize },
    #[error("density must lie in [0, 1], got {density}")]
    DensityOutOfRange { density: f64 },
    #[error("density {density} cannot keep the graph connected; this node count needs at least {minimum:.4}")]
    DensityTooSparse { density: f64, minimum: f64 },
    #[error("pivotal count must lie in [2, nodes]; got {pivotal} of {nodes} nodes")]
    BadPivotalCount { pivotal: usize, nodes: usize },
    #[error("adherence must lie in [0, 1], got {adherence}")]
    BadAdherence { adherence: f64 },
    #[error("at least one trajectory must be generated")]
    NoTrajectories,
}

/// Full recipe for one synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// POIs in the network, ids `1..=n_nodes`.
    pub n_nodes: usize,
    /// Fraction of all possible edges the network keeps.
    pub target_density: f64,
    /// How many POIs the highway connects.
    pub n_pivotal: usize,
    /// How many trajectories to walk.
    pub n_trajectories: usize,
    /// Probability of taking an available highway hop.
    pub adherence: f64,
    /// Seed for every random decision in the run.
    pub rng_seed: u64,
}

impl SyntheticConfig {
    /// Defaults for a park-like network of `n_nodes` POIs: density 0.2, a
    /// quarter of the nodes pivotal (at least 2), adherence 0.9.
    pub fn for_scale(n_nodes: usize, n_trajectories: usize, rng_seed: u64) -> Self {
        SyntheticConfig {
            n_nodes,
            target_density: 0.2,
            n_pivotal: (((n_nodes as f64) * 0.25).round() as usize).max(2),
            n_trajectories,
            adherence: 0.9,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        if self.n_nodes < 2 {
            return Err(SyntheticError::TooFewNodes { nodes: self.n_nodes });
        }
        if self.n_pivotal < 2 || self.n_pivotal > self.n_nodes {
            return Err(SyntheticError::BadPivotalCount {
                pivotal: self.n_pivotal,
                nodes: self.n_nodes,
            });
        }
        if !(0.0..=1.0).contains(&self.adherence) || !self.adherence.is_finite() {
            return Err(SyntheticError::BadAdherence {
                adherence: self.adherence,
            });
        }
        if self.n_trajectories == 0 {
            return Err(SyntheticError::NoTrajectories);
        }
        Ok(())
    }
}

/// Ground truth about a generated dataset, written next to it as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub density: f64,
    pub connected: bool,
    pub pivotal: Vec<u64>,
    pub highway_edges: Vec<(u64, u64)>,
    pub n_trajectories: usize,
    pub target_adherence: f64,
    /// `highway_taken / highway_opportunities`; absent when no walk ever saw
    /// a highway hop.
    pub measured_adherence: Option<f64>,
    pub highway_opportunities: u64,
    pub highway_taken: u64,
    pub unique_endpoint_pairs: usize,
    pub mean_trajectory_len: f64,
    pub rng_seed: u64,
}

/// A generated dataset plus the structures it came from.
#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub dataset: TrajectoryDataset,
    pub base_graph: SimpleGraph,
    pub highway: HighwayTree,
    pub stats: SyntheticStats,
}

/// Generate a dataset per `config`. Deterministic in the seed.
pub fn generate_dataset(config: &SyntheticConfig) -> Result<SyntheticOutput, SyntheticError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let base_graph = generate_base_graph(config.n_nodes, config.target_density, &mut rng)?;
    let pivotal: BTreeSet<PoiId> =
        rand::seq::index::sample(&mut rng, config.n_nodes, config.n_pivotal)
            .iter()
            .map(|i| PoiId(i as u64 + 1))
            .collect();
    let highway = steiner_tree(&base_graph, &pivotal);

    let mut trajectories = Vec::with_capacity(config.n_trajectories);
    let mut counters = WalkCounters::default();
    let mut endpoint_pairs: BTreeSet<(PoiId, PoiId)> = BTreeSet::new();
    let mut total_len = 0usize;
    for _ in 0..config.n_trajectories {
        let (source, destination) = sample_endpoints(config.n_nodes, &pivotal, &mut rng);
        let (pois, walk) = synthesize_trajectory(
            &base_graph,
            &highway,
            source,
            destination,
            config.adherence,
            &mut rng,
        );
        counters.absorb(walk);
        endpoint_pairs.insert((source, destination));
        total_len += pois.len();
        trajectories.push(Trajectory::new(pois).expect("walks visit at least two POIs"));
    }

    let stats = SyntheticStats {
        n_nodes: config.n_nodes,
        n_edges: base_graph.size(),
        density: base_graph.density(),
        connected: base_graph.is_connected(),
        pivotal: pivotal.iter().map(|p| p.0).collect(),
        highway_edges: highway.edges().iter().map(|(a, b)| (a.0, b.0)).collect(),
        n_trajectories: config.n_trajectories,
        target_adherence: config.adherence,
        measured_adherence: (counters.opportunities > 0)
            .then(|| counters.taken as f64 / counters.opportunities as f64),
        highway_opportunities: counters.opportunities,
        highway_taken: counters.taken,
        unique_endpoint_pairs: endpoint_pairs.len(),
        mean_trajectory_len: total_len as f64 / config.n_trajectories as f64,
        rng_seed: config.rng_seed,
    };
    let dataset =
        TrajectoryDataset::from_trajectories(trajectories).expect("at least one trajectory");
    Ok(SyntheticOutput {
        dataset,
        base_graph,
        highway,
        stats,
    })
}

/// Draw a source/destination pair: pivotal POIs carry
/// [`PIVOTAL_ENDPOINT_WEIGHT`], ordinary POIs weight 1, and the destination
/// is drawn from the same weights excluding the source.
fn sample_endpoints(
    n_nodes: usize,
    pivotal: &BTreeSet<PoiId>,
    rng: &mut impl Rng,
) -> (PoiId, PoiId) {
    let source = sample_weighted_node(n_nodes, pivotal, rng, None);
    let destination = sample_weighted_node(n_nodes, pivotal, rng, Some(source));
    (source, destination)
}

fn sample_weighted_node(
    n_nodes: usize,
    pivotal: &BTreeSet<PoiId>,
    rng: &mut impl Rng,
    exclude: Option<PoiId>,
) -> PoiId {
    let weight_of = |v: PoiId| {
        if pivotal.contains(&v) {
            PIVOTAL_ENDPOINT_WEIGHT
        } else {
            1
        }
    };
    let total: u64 = (1..=n_nodes as u64)
        .map(PoiId)
        .filter(|v| Some(*v) != exclude)
        .map(weight_of)
        .sum();
    let mut ticket = rng.random_range(0..total);
    for v in (1..=n_nodes as u64).map(PoiId) {
        if Some(v) == exclude {
            continue;
        }
        let w = weight_of(v);
        if ticket < w {
            return v;
        }
        ticket -= w;
    }
    unreachable!("ticket always lands on a node")
}

/// Write the dataset to `out` (canonical `a -> b -> c` lines with a one-line
/// descriptive comment) and its stats to `<out>.stats.json`. Returns the
/// stats path.
pub fn write_dataset_files(output: &SyntheticOutput, out: &Path) -> io::Result<PathBuf> {
    let stats = &output.stats;
    let header = format!(
        "# synthetic trajectories: nodes={} edges={} pivotal={} adherence={} seed={}\n",
        stats.n_nodes,
        stats.n_edges,
        stats.pivotal.len(),
        stats.target_adherence,
        stats.rng_seed,
    );
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, header + &output.dataset.to_canonical_string())?;
    let stats_path = PathBuf::from(format!("{}.stats.json", out.display()));
    let body = serde_json::to_vec_pretty(stats).expect("stats serialize");
    fs::write(&stats_path, body)?;
    Ok(stats_path)
}
