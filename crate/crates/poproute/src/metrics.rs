//! Recommendation quality metrics: set-based F1 against a ground-truth route
//! and Traversability against the trajectory graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Route, TrajectoryGraph};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("route with {0} POI(s) has no consecutive pairs to check")]
    DegenerateRoute(usize),
    #[error("cannot aggregate an empty batch of reports")]
    EmptyBatch,
}

/// Per-query (or aggregated) metric values. All fields are in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub traversability: f64,
}

/// Set-based precision/recall/F1 between a recommended route and the
/// ground-truth route.
///
/// With V_r the ground-truth POI set and V_R the recommended POI set:
/// precision = |V_r ∩ V_R| / |V_R|, recall = |V_r ∩ V_R| / |V_r|, and
/// F1 = 2PR / (P + R), defined as 0 when both P and R are 0. Visit order and
/// repetition do not matter; only set membership does.
pub fn f1_score(recommended: &Route, ground_truth: &Route) -> (f64, f64, f64) {
    let v_big_r = recommended.poi_set();
    let v_r = ground_truth.poi_set();
    let overlap = v_r.intersection(&v_big_r).count() as f64;
    let precision = overlap / v_big_r.len() as f64;
    let recall = overlap / v_r.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Fraction of the route's consecutive POI pairs that are road segments of
/// the trajectory graph: (number of pairs in E_T) / (K - 1) for a route of
/// K POIs. Routes of fewer than two POIs have no pairs to check.
pub fn traversability(route: &Route, graph: &TrajectoryGraph) -> Result<f64, MetricError> {
    let k = route.len();
    if k < 2 {
        return Err(MetricError::DegenerateRoute(k));
    }
    let supported = route
        .segments()
        .filter(|seg| graph.has_segment(seg.from, seg.to))
        .count();
    Ok(supported as f64 / (k - 1) as f64)
}

/// Unweighted per-field mean over a batch of reports.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let n = reports.len() as f64;
    Ok(MetricReport {
        precision: reports.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: reports.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: reports.iter().map(|r| r.f1).sum::<f64>() / n,
        traversability: reports.iter().map(|r| r.traversability).sum::<f64>() / n,
    })
}
