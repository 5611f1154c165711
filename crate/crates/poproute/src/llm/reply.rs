//! Tolerant parsing of agent replies and validation of returned paths.
//!
//! Real model output wraps the requested JSON in code fences and prose, adds
//! trailing commas, and renders lists in several shapes (`"1 -> 2 -> 3"`
//! strings, arrays of strings, arrays of integer arrays). The parser here
//! accepts all of those, records whether any repair was needed, and fails
//! only when nothing machine-readable can be recovered.

use std::collections::BTreeSet;

use serde_json::Value;

use crate::trajectory::{CandidateSet, PoiId, Query, RoadSegment, Route, TrajectoryGraph};

use super::prompt::AgentKind;
use super::LlmError;

/// The machine-readable part of one agent reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedReply {
    /// Routes from discovery, synthesis, or selection replies, in reply order.
    Paths(Vec<Route>),
    /// POI ids ordered most- to least-popular.
    PoiOrder(Vec<PoiId>),
    /// Directed edges ordered most- to least-popular.
    EdgeOrder(Vec<RoadSegment>),
}

/// One parsed agent reply: the raw text as received, the extracted answer,
/// and whether any repair (fence/prose stripping, trailing-comma removal)
/// was needed to parse it.
#[derive(Debug, Clone)]
pub struct AgentReply {
    pub kind: AgentKind,
    pub raw: String,
    pub parsed: ParsedReply,
    pub repair_applied: bool,
}

impl AgentReply {
    pub fn paths(&self) -> Option<&[Route]> {
        match &self.parsed {
            ParsedReply::Paths(routes) => Some(routes),
            _ => None,
        }
    }

    pub fn poi_order(&self) -> Option<&[PoiId]> {
        match &self.parsed {
            ParsedReply::PoiOrder(ids) => Some(ids),
            _ => None,
        }
    }

    pub fn edge_order(&self) -> Option<&[RoadSegment]> {
        match &self.parsed {
            ParsedReply::EdgeOrder(edges) => Some(edges),
            _ => None,
        }
    }
}

/// Parse the raw reply text for `kind`, tolerating fences, surrounding
/// prose, and trailing commas. An explicitly empty answer (e.g.
/// `"candidate_paths": []`) parses as an empty list; a reply whose answer
/// field exists but yields nothing machine-readable is an error.
pub fn parse_reply(kind: AgentKind, raw: &str) -> Result<AgentReply, LlmError> {
    let (value, repaired_json, clean) = extract_json_object(raw).ok_or_else(|| unparseable(kind, raw))?;
    let field = kind.reply_field();
    let answer = value.get(field).ok_or_else(|| unparseable(kind, raw))?;
    let parsed = match kind {
        AgentKind::Discovery | AgentKind::Synthesis | AgentKind::Selection => {
            ParsedReply::Paths(routes_from_value(answer).map_err(|_| unparseable(kind, raw))?)
        }
        AgentKind::RankPoi => {
            ParsedReply::PoiOrder(pois_from_value(answer).map_err(|_| unparseable(kind, raw))?)
        }
        AgentKind::RankEdge => {
            ParsedReply::EdgeOrder(edges_from_value(answer).map_err(|_| unparseable(kind, raw))?)
        }
    };
    Ok(AgentReply {
        kind,
        raw: raw.to_string(),
        parsed,
        repair_applied: repaired_json || !clean,
    })
}

fn unparseable(kind: AgentKind, raw: &str) -> LlmError {
    let excerpt: String = raw.chars().take(120).collect();
    LlmError::UnparseableReply { kind, excerpt }
}

/// Find the first balanced `{...}` block in `raw` that parses as JSON,
/// applying trailing-comma repair when plain parsing fails. Returns the
/// value, whether comma repair was used, and whether the block was the
/// entire (trimmed) reply.
fn extract_json_object(raw: &str) -> Option<(Value, bool, bool)> {
    let trimmed = raw.trim();
    for (start, block) in balanced_blocks(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(block) {
            if v.is_object() {
                let clean = block == trimmed;
                return Some((v, false, clean));
            }
            continue;
        }
        let repaired = strip_trailing_commas(block);
        if let Ok(v) = serde_json::from_str::<Value>(&repaired) {
            if v.is_object() {
                let _ = start;
                return Some((v, true, false));
            }
        }
    }
    None
}

/// Yield every balanced top-level `{...}` slice of `raw`, in order,
/// honouring JSON string and escape rules while scanning.
fn balanced_blocks(raw: &str) -> Vec<(usize, &str)> {
    let bytes = raw.as_bytes();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let start = i;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = None;
        let mut j = start;
        while j < bytes.len() {
            let b = bytes[j];
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
            } else {
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(j);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            j += 1;
        }
        match end {
            Some(e) => {
                blocks.push((start, &raw[start..=e]));
                i = start + 1; // also consider nested objects as candidates
            }
            None => break, // unbalanced to the end of input
        }
    }
    blocks
}

/// Remove commas that directly precede `}` or `]` (outside strings).
fn strip_trailing_commas(block: &str) -> String {
    let bytes = block.as_bytes();
    let mut out = String::with_capacity(block.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            out.push(b as char);
            i += 1;
            continue;
        }
        if b == b'"' {
            in_string = true;
            out.push('"');
            i += 1;
            continue;
        }
        if b == b',' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] as char).is_whitespace() {
                j += 1;
            }
            if j < bytes.len() && (bytes[j] == b'}' || bytes[j] == b']') {
                i += 1; // drop the comma, keep scanning from the whitespace
                continue;
            }
        }
        out.push(b as char);
        i += 1;
    }
    out
}

// ===== Field conversions =====

/// Why a field's content could not be converted. Only used internally to
/// distinguish "explicitly empty" (fine) from "present but unreadable".
type FieldError = String;

fn routes_from_value(v: &Value) -> Result<Vec<Route>, FieldError> {
    match v {
        Value::Null => Ok(Vec::new()),
        Value::String(s) => routes_from_text(s),
        Value::Array(items) => {
            if items.is_empty() {
                return Ok(Vec::new());
            }
            // An array whose items are all numbers is a single route.
            if items.iter().all(|i| i.is_u64()) {
                let ids: Vec<PoiId> =
                    items.iter().map(|i| PoiId(i.as_u64().unwrap())).collect();
                return match Route::from_pois(ids) {
                    Ok(r) => Ok(vec![r]),
                    Err(_) => Err("numeric array did not form a route".into()),
                };
            }
            let mut routes = Vec::new();
            let mut attempted = 0usize;
            for item in items {
                match item {
                    Value::String(s) => {
                        attempted += 1;
                        if let Some(r) = route_from_line(s) {
                            routes.push(r);
                        }
                    }
                    Value::Array(ids) if ids.iter().all(|i| i.is_u64()) => {
                        attempted += 1;
                        let pois: Vec<PoiId> =
                            ids.iter().map(|i| PoiId(i.as_u64().unwrap())).collect();
                        if let Ok(r) = Route::from_pois(pois) {
                            routes.push(r);
                        }
                    }
                    Value::Object(map) => {
                        attempted += 1;
                        for key in ["path", "route", "pois"] {
                            if let Some(inner) = map.get(key) {
                                if let Ok(mut rs) = routes_from_value(inner) {
                                    routes.append(&mut rs);
                                    break;
                                }
                            }
                        }
                    }
                    _ => attempted += 1,
                }
            }
            if routes.is_empty() && attempted > 0 {
                Err("no array item yielded a route".into())
            } else {
                Ok(routes)
            }
        }
        _ => Err(format!("unsupported paths value: {v}")),
    }
}

/// Parse routes out of free text: one route per line (or per `;`-separated
/// chunk). An empty or prose-only answer yields an empty list only when no
/// chunk looked like a route at all and none parsed; we treat "no chunks"
/// as explicit emptiness and "chunks but none parse" as an error.
fn routes_from_text(s: &str) -> Result<Vec<Route>, FieldError> {
    let mut routes = Vec::new();
    let mut attempted = 0usize;
    for line in s.lines() {
        for chunk in line.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            attempted += 1;
            if let Some(r) = route_from_line(chunk) {
                routes.push(r);
            }
        }
    }
    if routes.is_empty() && attempted > 0 {
        Err("text answer contained no parseable route".into())
    } else {
        Ok(routes)
    }
}

/// Parse one route from one line, stripping bullets, enumeration prefixes,
/// and surrounding quotes. Returns `None` when the line is not a route.
fn route_from_line(line: &str) -> Option<Route> {
    let mut text = line.trim();
    text = text.trim_start_matches(['-', '*', '+']).trim_start();
    // Enumeration prefixes like "1." or "2)" — only strip when followed by
    // content that still contains a separator (so "1. 2" isn't mangled).
    if let Some(rest) = strip_enumeration(text) {
        text = rest;
    }
    text = text.trim_matches('"').trim_matches('\'').trim();
    if text.is_empty() {
        return None;
    }
    Route::parse(text).ok()
}

fn strip_enumeration(text: &str) -> Option<&str> {
    let (head, rest) = text.split_once(['.', ')'])?;
    if head.chars().all(|c| c.is_ascii_digit()) && !head.is_empty() {
        let rest = rest.trim_start();
        // Only treat as enumeration when the remainder still holds a route.
        if rest.contains("->") {
            return Some(rest);
        }
    }
    None
}

fn pois_from_value(v: &Value) -> Result<Vec<PoiId>, FieldError> {
    let mut ids = Vec::new();
    match v {
        Value::Null => {}
        Value::String(s) => {
            for token in s.split([',', '\n']) {
                let token = token.trim().trim_matches('"');
                if token.is_empty() {
                    continue;
                }
                // Accept "8" and "POI 8"-style tokens by taking the digits.
                let digits: String = token.chars().filter(|c| c.is_ascii_digit()).collect();
                if digits.is_empty() {
                    continue;
                }
                ids.push(PoiId(digits.parse::<u64>().map_err(|e| e.to_string())?));
            }
            if ids.is_empty() && !s.trim().is_empty() {
                return Err("string held no POI ids".into());
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Number(n) => {
                        ids.push(PoiId(n.as_u64().ok_or("non-integer POI id")?))
                    }
                    Value::String(s) => {
                        let digits: String =
                            s.chars().filter(|c| c.is_ascii_digit()).collect();
                        if !digits.is_empty() {
                            ids.push(PoiId(digits.parse::<u64>().map_err(|e| e.to_string())?));
                        }
                    }
                    _ => return Err(format!("unsupported POI entry: {item}")),
                }
            }
            if ids.is_empty() && !items.is_empty() {
                return Err("array held no POI ids".into());
            }
        }
        _ => return Err(format!("unsupported poi_rank value: {v}")),
    }
    // Drop duplicate mentions, keeping the first (highest-ranked) one.
    let mut seen = BTreeSet::new();
    ids.retain(|id| seen.insert(*id));
    Ok(ids)
}

fn edges_from_value(v: &Value) -> Result<Vec<RoadSegment>, FieldError> {
    let mut edges = Vec::new();
    match v {
        Value::Null => {}
        Value::String(s) => {
            edges = edges_from_text(s)?;
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::String(s) => edges.extend(edges_from_text(s)?),
                    Value::Array(pair) if pair.len() == 2 => {
                        let a = pair[0].as_u64().ok_or("non-integer edge endpoint")?;
                        let b = pair[1].as_u64().ok_or("non-integer edge endpoint")?;
                        if a != b {
                            edges.push(RoadSegment::new(PoiId(a), PoiId(b)));
                        }
                    }
                    _ => return Err(format!("unsupported edge entry: {item}")),
                }
            }
        }
        _ => return Err(format!("unsupported edge_rank value: {v}")),
    }
    if edges.is_empty() && !matches!(v, Value::Null) && !is_explicitly_empty(v) {
        return Err("answer held no edges".into());
    }
    // Drop duplicate mentions, keeping the first (highest-ranked) one.
    let mut seen = BTreeSet::new();
    edges.retain(|e| seen.insert(*e));
    Ok(edges)
}

fn is_explicitly_empty(v: &Value) -> bool {
    match v {
        Value::String(s) => s.trim().is_empty(),
        Value::Array(items) => items.is_empty(),
        Value::Null => true,
        _ => false,
    }
}

/// Parse `(a,b)` pairs (or `a -> b` fallbacks) out of free text.
pub(crate) fn edges_from_text(s: &str) -> Result<Vec<RoadSegment>, FieldError> {
    let mut edges = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' {
            if let Some(close) = s[i + 1..].find(')') {
                let inner = &s[i + 1..i + 1 + close];
                let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
                if parts.len() == 2 {
                    if let (Ok(a), Ok(b)) = (parts[0].parse::<u64>(), parts[1].parse::<u64>()) {
                        if a != b {
                            edges.push(RoadSegment::new(PoiId(a), PoiId(b)));
                        }
                    }
                }
                i += close + 2;
                continue;
            }
        }
        i += 1;
    }
    if edges.is_empty() {
        // Fallback: "a -> b" lines, one edge per line.
        for line in s.lines() {
            let line = line.trim().trim_start_matches(['-', '*']).trim();
            if let Some((a, b)) = line.split_once("->") {
                if let (Ok(a), Ok(b)) = (a.trim().parse::<u64>(), b.trim().parse::<u64>()) {
                    if a != b {
                        edges.push(RoadSegment::new(PoiId(a), PoiId(b)));
                    }
                }
            }
        }
    }
    Ok(edges)
}

// ===== Path validation =====

/// The result of validating agent-returned routes against the query and the
/// trajectory graph.
#[derive(Debug, Clone)]
pub struct ValidatedPaths {
    /// Routes that connect the queried endpoints, deduplicated in reply
    /// order (duplicates accumulate occurrence counts).
    pub candidates: CandidateSet,
    /// How many returned routes were dropped for not connecting the queried
    /// source to the queried destination.
    pub dropped_endpoints: usize,
    /// Kept routes that use at least one segment absent from the trajectory
    /// graph (hallucinated edges). They stay in the candidate set but are
    /// surfaced so callers can flag them.
    pub flagged: BTreeSet<Route>,
}

/// Validate routes an agent returned: routes whose endpoints do not match
/// the query are dropped; routes using segments absent from `graph` are kept
/// but flagged.
pub fn validate_paths(routes: &[Route], graph: &TrajectoryGraph, query: Query) -> ValidatedPaths {
    let mut candidates = CandidateSet::empty(query);
    let mut dropped = 0usize;
    let mut flagged = BTreeSet::new();
    for route in routes {
        if candidates.insert(route.clone()).is_err() {
            dropped += 1;
            continue;
        }
        if route.segments().any(|s| !graph.has_segment(s.from, s.to)) {
            flagged.insert(route.clone());
        }
    }
    ValidatedPaths {
        candidates,
        dropped_endpoints: dropped,
        flagged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryDataset;

    fn route(ids: &[u64]) -> Route {
        Route::from_pois(ids.iter().map(|&v| PoiId(v))).unwrap()
    }

    #[test]
    fn clean_json_reply_parses_without_repair_flag() {
        let raw = r#"{"identification_process": "scanned", "candidate_paths": ["1 -> 2 -> 3", "1 -> 3"]}"#;
        let reply = parse_reply(AgentKind::Discovery, raw).unwrap();
        assert!(!reply.repair_applied);
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 2, 3]), route(&[1, 3])]);
    }

    #[test]
    fn fenced_reply_parses_with_repair_flag() {
        let raw = "Here is the answer you asked for:\n```json\n{\n  \"identification_process\": \"ok\",\n  \"candidate_paths\": [\"1 -> 2\"]\n}\n```\nLet me know if you need anything else!";
        let reply = parse_reply(AgentKind::Discovery, raw).unwrap();
        assert!(reply.repair_applied);
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 2])]);
    }

    #[test]
    fn trailing_commas_are_repaired() {
        let raw = "{\"candidate_paths\": [\"1 -> 2\", \"1 -> 3 -> 2\",], \"identification_process\": \"x\",}";
        let reply = parse_reply(AgentKind::Discovery, raw).unwrap();
        assert!(reply.repair_applied);
        assert_eq!(reply.paths().unwrap().len(), 2);
    }

    #[test]
    fn paths_accept_string_array_and_nested_int_arrays() {
        let as_string = r#"{"generated_paths": "1 -> 4 -> 2\n1 -> 2"}"#;
        let reply = parse_reply(AgentKind::Synthesis, as_string).unwrap();
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 4, 2]), route(&[1, 2])]);

        let as_ints = r#"{"generated_paths": [[1, 4, 2], [1, 2]]}"#;
        let reply = parse_reply(AgentKind::Synthesis, as_ints).unwrap();
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 4, 2]), route(&[1, 2])]);

        let single = r#"{"generated_paths": [1, 4, 2]}"#;
        let reply = parse_reply(AgentKind::Synthesis, single).unwrap();
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 4, 2])]);
    }

    #[test]
    fn bullets_and_enumerations_are_stripped() {
        let raw = "{\"ranked_paths\": \"- 1 -> 2 -> 3\\n2. 1 -> 3\"}";
        let reply = parse_reply(AgentKind::Selection, raw).unwrap();
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 2, 3]), route(&[1, 3])]);
    }

    #[test]
    fn explicit_empty_answers_parse_as_empty() {
        for raw in [
            r#"{"candidate_paths": []}"#,
            r#"{"candidate_paths": ""}"#,
            r#"{"candidate_paths": null}"#,
        ] {
            let reply = parse_reply(AgentKind::Discovery, raw).unwrap();
            assert!(reply.paths().unwrap().is_empty(), "raw: {raw}");
        }
    }

    #[test]
    fn unreadable_answers_error_rather_than_parsing_empty() {
        // Prose with no parseable route is an error, not silent emptiness.
        let raw = r#"{"candidate_paths": "there are no direct edges but many options"}"#;
        let err = parse_reply(AgentKind::Discovery, raw).unwrap_err();
        assert!(matches!(err, LlmError::UnparseableReply { .. }));

        // Entirely non-JSON reply.
        let err = parse_reply(AgentKind::Discovery, "I cannot answer that.").unwrap_err();
        assert!(matches!(err, LlmError::UnparseableReply { .. }));

        // JSON missing the answer field.
        let err = parse_reply(AgentKind::Discovery, r#"{"paths": ["1 -> 2"]}"#).unwrap_err();
        assert!(matches!(err, LlmError::UnparseableReply { .. }));
    }

    #[test]
    fn poi_rank_parses_string_and_array_forms() {
        let raw = r#"{"poi_rank": "8, 9, 15, 17"}"#;
        let reply = parse_reply(AgentKind::RankPoi, raw).unwrap();
        assert_eq!(
            reply.poi_order().unwrap(),
            &[PoiId(8), PoiId(9), PoiId(15), PoiId(17)]
        );

        let raw = r#"{"poi_rank": [8, 9, 15]}"#;
        let reply = parse_reply(AgentKind::RankPoi, raw).unwrap();
        assert_eq!(reply.poi_order().unwrap(), &[PoiId(8), PoiId(9), PoiId(15)]);

        let raw = r#"{"poi_rank": ["POI 8", "POI 9"]}"#;
        let reply = parse_reply(AgentKind::RankPoi, raw).unwrap();
        assert_eq!(reply.poi_order().unwrap(), &[PoiId(8), PoiId(9)]);

        // Duplicate mentions keep the first (best) position.
        let raw = r#"{"poi_rank": "8, 9, 8, 15"}"#;
        let reply = parse_reply(AgentKind::RankPoi, raw).unwrap();
        assert_eq!(reply.poi_order().unwrap(), &[PoiId(8), PoiId(9), PoiId(15)]);
    }

    #[test]
    fn edge_rank_parses_pair_syntax_and_nested_arrays() {
        let raw = r#"{"edge_rank": "(16,9), (10,11), (5, 8)"}"#;
        let reply = parse_reply(AgentKind::RankEdge, raw).unwrap();
        assert_eq!(
            reply.edge_order().unwrap(),
            &[
                RoadSegment::new(PoiId(16), PoiId(9)),
                RoadSegment::new(PoiId(10), PoiId(11)),
                RoadSegment::new(PoiId(5), PoiId(8)),
            ]
        );

        let raw = r#"{"edge_rank": [[16, 9], [10, 11]]}"#;
        let reply = parse_reply(AgentKind::RankEdge, raw).unwrap();
        assert_eq!(reply.edge_order().unwrap().len(), 2);

        let raw = r#"{"edge_rank": ["(1,2)", "(2,3)"]}"#;
        let reply = parse_reply(AgentKind::RankEdge, raw).unwrap();
        assert_eq!(reply.edge_order().unwrap().len(), 2);
    }

    #[test]
    fn validate_drops_wrong_endpoints_and_flags_unsupported_segments() {
        let ds = TrajectoryDataset::parse("1 -> 2 -> 3\n1 -> 3\n").unwrap();
        let graph = TrajectoryGraph::build(&ds, true);
        let query = Query::new(PoiId(1), PoiId(3)).unwrap();
        let routes = vec![
            route(&[1, 2, 3]),  // valid, supported
            route(&[2, 3]),     // wrong source — dropped
            route(&[1, 5, 3]),  // right endpoints, hallucinated middle — flagged
            route(&[1, 2, 3]),  // duplicate — merges
        ];
        let v = validate_paths(&routes, &graph, query);
        assert_eq!(v.dropped_endpoints, 1);
        assert_eq!(v.candidates.len(), 2);
        assert_eq!(v.candidates.occurrence_of(&route(&[1, 2, 3])), 2);
        assert_eq!(v.flagged.len(), 1);
        assert!(v.flagged.contains(&route(&[1, 5, 3])));
    }

    #[test]
    fn validation_keeps_reply_order_for_kept_routes() {
        let ds = TrajectoryDataset::parse("1 -> 2 -> 3\n").unwrap();
        let graph = TrajectoryGraph::build(&ds, true);
        let query = Query::new(PoiId(1), PoiId(3)).unwrap();
        let routes = vec![route(&[1, 9, 3]), route(&[1, 2, 3]), route(&[1, 3])];
        let v = validate_paths(&routes, &graph, query);
        assert_eq!(
            v.candidates.routes(),
            &[route(&[1, 9, 3]), route(&[1, 2, 3]), route(&[1, 3])]
        );
    }

    #[test]
    fn first_parsing_object_wins_when_prose_holds_examples() {
        let raw = "The format { \"like\": this } is invalid JSON, so skipped.\n\
                   {\"candidate_paths\": [\"1 -> 2\"]}";
        let reply = parse_reply(AgentKind::Discovery, raw).unwrap();
        assert_eq!(reply.paths().unwrap(), &[route(&[1, 2])]);
        assert!(reply.repair_applied);
    }
}
