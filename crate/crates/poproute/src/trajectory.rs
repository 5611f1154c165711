//! Core data model: POIs, trajectories, the trajectory-induced road graph,
//! queries, routes, and ground-truth extraction.
//!
//! Everything downstream (rankings, path synthesis, metrics, the agent
//! pipeline) is defined over these types. The graph here is not a street map:
//! its vertices are POIs and its edges are exactly the consecutive POI pairs
//! observed in historical trajectories.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ===== Identifiers =====

/// Integer identifier of a point of interest.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PoiId(pub u64);

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for PoiId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse::<u64>().map(PoiId)
    }
}

impl From<u64> for PoiId {
    fn from(v: u64) -> Self {
        PoiId(v)
    }
}

/// A directed road segment between two distinct POIs.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct RoadSegment {
    pub from: PoiId,
    pub to: PoiId,
}

impl RoadSegment {
    /// Panics in debug builds if `from == to`; self-loops never arise from
    /// parsed data because consecutive duplicates are collapsed first.
    pub fn new(from: PoiId, to: PoiId) -> Self {
        debug_assert_ne!(from, to, "road segments connect distinct POIs");
        RoadSegment { from, to }
    }

    pub fn reversed(&self) -> Self {
        RoadSegment { from: self.to, to: self.from }
    }
}

impl fmt::Display for RoadSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

// ===== Errors =====

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: malformed token {token:?}")]
    MalformedLine { line: usize, token: String },
    #[error("no trajectories found in input")]
    EmptyDataset,
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("route must contain at least one POI")]
    Empty,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("source and destination must differ (both were {0})")]
    SameEndpoints(PoiId),
    #[error("POI {0} does not occur in the dataset")]
    UnknownPoi(PoiId),
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("route endpoints {got_from} -> {got_to} do not match query {want_from} -> {want_to}")]
    EndpointMismatch {
        want_from: PoiId,
        want_to: PoiId,
        got_from: PoiId,
        got_to: PoiId,
    },
}

#[derive(Debug, Error)]
#[error("candidate set is empty")]
pub struct EmptyCandidates;

// ===== Trajectories =====

/// One historical trip: an ordered POI sequence with consecutive duplicates
/// collapsed. A single check-in (length 1) is a valid trajectory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pois: Vec<PoiId>,
}

impl Trajectory {
    pub fn new(pois: impl IntoIterator<Item = PoiId>) -> Result<Self, RouteError> {
        let pois = collapse_consecutive(pois);
        if pois.is_empty() {
            return Err(RouteError::Empty);
        }
        Ok(Trajectory { pois })
    }

    pub fn pois(&self) -> &[PoiId] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    /// Consecutive POI pairs in visit order.
    pub fn segments(&self) -> impl Iterator<Item = RoadSegment> + '_ {
        self.pois.windows(2).map(|w| RoadSegment::new(w[0], w[1]))
    }

    pub fn contains(&self, poi: PoiId) -> bool {
        self.pois.contains(&poi)
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", join_arrow(&self.pois))
    }
}

fn collapse_consecutive(pois: impl IntoIterator<Item = PoiId>) -> Vec<PoiId> {
    let mut out: Vec<PoiId> = Vec::new();
    for p in pois {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

pub(crate) fn join_arrow(pois: &[PoiId]) -> String {
    pois.iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

// ===== Dataset =====

/// An ordered collection of historical trajectories plus the universe of POIs
/// they mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
    poi_universe: BTreeSet<PoiId>,
}

impl TrajectoryDataset {
    pub fn from_trajectories(
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, ParseError> {
        if trajectories.is_empty() {
            return Err(ParseError::EmptyDataset);
        }
        let poi_universe = trajectories
            .iter()
            .flat_map(|t| t.pois().iter().copied())
            .collect();
        Ok(TrajectoryDataset { trajectories, poi_universe })
    }

    /// Parses the canonical trajectory file format: UTF-8 text, one trajectory
    /// per line, POI ids joined by `->` (whitespace optional). Blank lines and
    /// `#` comment lines are ignored. Lines without `->` may instead use
    /// commas or whitespace as separators; `->` is always used on write.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut trajectories = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = if line.contains("->") {
                line.split("->").map(str::trim).collect()
            } else {
                line.split(|c: char| c == ',' || c.is_whitespace())
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .collect()
            };
            let mut pois = Vec::with_capacity(tokens.len());
            for token in tokens {
                match token.parse::<PoiId>() {
                    Ok(p) => pois.push(p),
                    Err(_) => {
                        return Err(ParseError::MalformedLine {
                            line: line_no,
                            token: token.to_string(),
                        })
                    }
                }
            }
            match Trajectory::new(pois) {
                Ok(t) => trajectories.push(t),
                Err(RouteError::Empty) => {
                    // A line like "->" has only empty tokens; report it.
                    return Err(ParseError::MalformedLine {
                        line: line_no,
                        token: String::new(),
                    });
                }
            }
        }
        Self::from_trajectories(trajectories)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn poi_universe(&self) -> &BTreeSet<PoiId> {
        &self.poi_universe
    }

    pub fn contains_poi(&self, poi: PoiId) -> bool {
        self.poi_universe.contains(&poi)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Canonical on-disk form: one `a -> b -> c` line per trajectory.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for t in &self.trajectories {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }
}

// ===== Graph =====

/// The trajectory-induced road graph: vertices are POIs, edges are exactly
/// the consecutive POI pairs observed in the dataset, with observation counts.
///
/// With `directed = false`, every observed pair also carries its reverse and
/// both orientations share the accumulated count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryGraph {
    directed: bool,
    segment_freq: BTreeMap<RoadSegment, u64>,
    poi_freq: BTreeMap<PoiId, u64>,
    successors: BTreeMap<PoiId, Vec<PoiId>>,
}

impl TrajectoryGraph {
    pub fn build(dataset: &TrajectoryDataset, directed: bool) -> Self {
        let mut raw: BTreeMap<RoadSegment, u64> = BTreeMap::new();
        let mut poi_freq: BTreeMap<PoiId, u64> = BTreeMap::new();
        for t in dataset.trajectories() {
            for p in t.pois() {
                *poi_freq.entry(*p).or_insert(0) += 1;
            }
            for seg in t.segments() {
                *raw.entry(seg).or_insert(0) += 1;
            }
        }

        let segment_freq = if directed {
            raw
        } else {
            // Merge the two orientations, then record both with the merged count.
            let mut merged: BTreeMap<RoadSegment, u64> = BTreeMap::new();
            for (seg, n) in &raw {
                let canon = if seg.from <= seg.to { *seg } else { seg.reversed() };
                *merged.entry(canon).or_insert(0) += n;
            }
            let mut both = BTreeMap::new();
            for (seg, n) in merged {
                both.insert(seg, n);
                both.insert(seg.reversed(), n);
            }
            both
        };

        let mut successors: BTreeMap<PoiId, Vec<PoiId>> = BTreeMap::new();
        for seg in segment_freq.keys() {
            successors.entry(seg.from).or_default().push(seg.to);
        }
        // BTreeMap iteration is sorted by (from, to), so each successor list is
        // already ascending; keep that as the deterministic neighbor order.

        TrajectoryGraph { directed, segment_freq, poi_freq, successors }
    }

    /// Builds a graph from a bare segment list (frequency 1 each). Used where
    /// only connectivity matters, e.g. reconstructing a graph from an edge
    /// ranking that covers all segments.
    pub fn from_segments(segments: impl IntoIterator<Item = RoadSegment>, directed: bool) -> Self {
        let mut segment_freq = BTreeMap::new();
        let mut poi_freq = BTreeMap::new();
        for seg in segments {
            segment_freq.insert(seg, 1);
            if !directed {
                segment_freq.insert(seg.reversed(), 1);
            }
            poi_freq.entry(seg.from).or_insert(1);
            poi_freq.entry(seg.to).or_insert(1);
        }
        let mut successors: BTreeMap<PoiId, Vec<PoiId>> = BTreeMap::new();
        for seg in segment_freq.keys() {
            successors.entry(seg.from).or_default().push(seg.to);
        }
        TrajectoryGraph { directed, segment_freq, poi_freq, successors }
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn segment_freq(&self) -> &BTreeMap<RoadSegment, u64> {
        &self.segment_freq
    }

    pub fn poi_freq(&self) -> &BTreeMap<PoiId, u64> {
        &self.poi_freq
    }

    pub fn poi_frequency(&self, poi: PoiId) -> u64 {
        self.poi_freq.get(&poi).copied().unwrap_or(0)
    }

    pub fn has_segment(&self, from: PoiId, to: PoiId) -> bool {
        self.segment_freq.contains_key(&RoadSegment { from, to })
    }

    pub fn segments(&self) -> impl Iterator<Item = RoadSegment> + '_ {
        self.segment_freq.keys().copied()
    }

    pub fn successors(&self, poi: PoiId) -> &[PoiId] {
        self.successors.get(&poi).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True when `to` can be reached from `from` along graph segments.
    pub fn reachable(&self, from: PoiId, to: PoiId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        seen.insert(from);
        while let Some(u) = queue.pop_front() {
            for &v in self.successors(u) {
                if v == to {
                    return true;
                }
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        false
    }
}

// ===== Queries and routes =====

/// A source/destination POI pair. Endpoints are always distinct.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Query {
    pub source: PoiId,
    pub destination: PoiId,
}

impl Query {
    pub fn new(source: PoiId, destination: PoiId) -> Result<Self, QueryError> {
        if source == destination {
            return Err(QueryError::SameEndpoints(source));
        }
        Ok(Query { source, destination })
    }

    /// Checks that both endpoints occur in the dataset's POI universe.
    pub fn validate_against(&self, dataset: &TrajectoryDataset) -> Result<(), QueryError> {
        for poi in [self.source, self.destination] {
            if !dataset.contains_poi(poi) {
                return Err(QueryError::UnknownPoi(poi));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.destination)
    }
}

/// An ordered POI sequence recommended (or extracted) as an answer. Non-empty,
/// no immediate repeats; routes produced for a query start at its source and
/// end at its destination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Route {
    pois: Vec<PoiId>,
}

impl Route {
    pub fn from_pois(pois: impl IntoIterator<Item = PoiId>) -> Result<Self, RouteError> {
        let pois = collapse_consecutive(pois);
        if pois.is_empty() {
            return Err(RouteError::Empty);
        }
        Ok(Route { pois })
    }

    pub fn pois(&self) -> &[PoiId] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn first(&self) -> PoiId {
        self.pois[0]
    }

    pub fn last(&self) -> PoiId {
        *self.pois.last().expect("routes are non-empty")
    }

    pub fn poi_set(&self) -> BTreeSet<PoiId> {
        self.pois.iter().copied().collect()
    }

    pub fn segments(&self) -> impl Iterator<Item = RoadSegment> + '_ {
        self.pois.windows(2).map(|w| RoadSegment::new(w[0], w[1]))
    }

    /// Parses a route from the same token forms accepted by dataset lines.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let ds_like = TrajectoryDataset::parse(text).map_err(|e| match e {
            ParseError::EmptyDataset => ParseError::MalformedLine { line: 1, token: String::new() },
            other => other,
        })?;
        let t = &ds_like.trajectories()[0];
        Ok(Route { pois: t.pois().to_vec() })
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", join_arrow(&self.pois))
    }
}

// ===== Candidate sets =====

/// Candidate routes answering one query. Routes are unique and kept in first
/// insertion order; `occurrence` counts how many extraction windows (or
/// synthesis emissions) produced each route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    query: Query,
    routes: Vec<Route>,
    occurrence: BTreeMap<Route, u64>,
}

impl CandidateSet {
    pub fn empty(query: Query) -> Self {
        CandidateSet { query, routes: Vec::new(), occurrence: BTreeMap::new() }
    }

    pub fn query(&self) -> Query {
        self.query
    }

    /// Adds one observation of `route`. Duplicate routes accumulate counts.
    pub fn insert(&mut self, route: Route) -> Result<(), CandidateError> {
        if route.first() != self.query.source || route.last() != self.query.destination {
            return Err(CandidateError::EndpointMismatch {
                want_from: self.query.source,
                want_to: self.query.destination,
                got_from: route.first(),
                got_to: route.last(),
            });
        }
        match self.occurrence.get_mut(&route) {
            Some(n) => *n += 1,
            None => {
                self.occurrence.insert(route.clone(), 1);
                self.routes.push(route);
            }
        }
        Ok(())
    }

    /// Adds `count` observations of `route` at once. `count` of zero is a
    /// no-op. Used when rebuilding a candidate set whose occurrence counts
    /// are already known.
    pub fn insert_with_count(&mut self, route: Route, count: u64) -> Result<(), CandidateError> {
        if count == 0 {
            return Ok(());
        }
        self.insert(route.clone())?;
        *self.occurrence.get_mut(&route).expect("just inserted") += count - 1;
        Ok(())
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn occurrence_of(&self, route: &Route) -> u64 {
        self.occurrence.get(route).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Route, u64)> + '_ {
        self.routes.iter().map(move |r| (r, self.occurrence_of(r)))
    }
}

// ===== Ground truth =====

/// Extracts every contiguous trajectory slice that starts at the query source
/// and ends at the query destination.
///
/// Each occurrence of the source opens a window that closes at the first
/// subsequent occurrence of the destination in the same trajectory; later
/// destinations belong to later windows only if a fresh source occurrence
/// opens them. Duplicate slices are merged with occurrence counts. An empty
/// result is the signal that no historical path exists (the generate stage
/// of the pipeline takes over).
pub fn extract_ground_truth(dataset: &TrajectoryDataset, query: Query) -> CandidateSet {
    let mut out = CandidateSet::empty(query);
    for t in dataset.trajectories() {
        let pois = t.pois();
        for start in 0..pois.len() {
            if pois[start] != query.source {
                continue;
            }
            if let Some(offset) = pois[start + 1..]
                .iter()
                .position(|&p| p == query.destination)
            {
                let end = start + 1 + offset;
                let route = Route::from_pois(pois[start..=end].iter().copied())
                    .expect("window is non-empty");
                out.insert(route).expect("window endpoints match the query");
            }
        }
    }
    out
}

// ===== Popular-path ordering =====

/// Orders scored candidates by descending score, then descending occurrence,
/// then shorter length, then lexicographic POI sequence.
///
/// This single comparator backs both the canonical popular path and the
/// pipeline's path-selection stage, so their top answers agree by
/// construction.
pub(crate) fn order_by_popularity(
    mut scored: Vec<(Route, u64, u64)>, // (route, score, occurrence)
) -> Vec<(Route, u64)> {
    scored.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(b.2.cmp(&a.2))
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    scored.into_iter().map(|(route, score, _)| (route, score)).collect()
}

/// The dataset's own answer to a query: the candidate route whose POI set has
/// the greatest summed visit frequency (ties: more occurrences, then shorter,
/// then lexicographically smallest).
///
/// Frequencies are summed over the route's deduplicated POI set, mirroring the
/// F1 metric's set semantics.
pub fn canonical_popular_path(
    candidates: &CandidateSet,
    graph: &TrajectoryGraph,
) -> Result<Route, EmptyCandidates> {
    if candidates.is_empty() {
        return Err(EmptyCandidates);
    }
    let scored = candidates
        .iter()
        .map(|(route, occ)| {
            let score = route
                .poi_set()
                .iter()
                .map(|p| graph.poi_frequency(*p))
                .sum();
            (route.clone(), score, occ)
        })
        .collect();
    let ordered = order_by_popularity(scored);
    Ok(ordered.into_iter().next().expect("non-empty").0)
}

// ===== Tests =====
