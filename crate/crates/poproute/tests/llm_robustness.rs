//! Robustness of the prompt/reply machinery: messy-but-recoverable model
//! replies, hard failures, HTTP retry behavior against a local server, and
//! cache replay. Ends with an optional live-endpoint round trip gated
//! behind environment variables.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use poproute::backend::{BackendError, LlmBackend, OracleBackend};
use poproute::harness::{enumerate_queries, EvalMode};
use poproute::llm::{
    AgentKind, ChatClient, ChatEndpointConfig, ChatTransport, LlmCache, LlmError,
    StubTransport, TransportReply, UsageSource,
};
use poproute::orchestrator::{Pipeline, PipelineError, PipelineOptions, Stage};
use poproute::synthetic::{generate_dataset, SyntheticConfig};
use poproute::trajectory::{PoiId, Query, Route, TrajectoryDataset, TrajectoryGraph};

const SAMPLE: &str = "1 -> 2 -> 3 -> 4\n1 -> 2 -> 4\n2 -> 3 -> 4\n1 -> 2 -> 3 -> 4\n";

fn sample() -> (TrajectoryDataset, TrajectoryGraph) {
    let dataset = TrajectoryDataset::parse(SAMPLE).unwrap();
    let graph = TrajectoryGraph::build(&dataset, true);
    (dataset, graph)
}

fn q(s: u64, d: u64) -> Query {
    Query::new(PoiId(s), PoiId(d)).unwrap()
}

fn route(pois: &[u64]) -> Route {
    Route::from_pois(pois.iter().map(|&p| PoiId(p))).unwrap()
}

/// Replays a fixed script of replies in order and records every prompt.
struct ScriptedTransport {
    replies: Mutex<VecDeque<String>>,
    prompts: Arc<Mutex<Vec<String>>>,
}

impl ScriptedTransport {
    fn new(replies: &[&str]) -> (Self, Arc<Mutex<Vec<String>>>) {
        let prompts = Arc::new(Mutex::new(Vec::new()));
        (
            ScriptedTransport {
                replies: Mutex::new(replies.iter().map(|r| r.to_string()).collect()),
                prompts: prompts.clone(),
            },
            prompts,
        )
    }
}

impl ChatTransport for ScriptedTransport {
    fn complete(
        &self,
        _config: &ChatEndpointConfig,
        prompt: &str,
    ) -> Result<TransportReply, LlmError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let text = self
            .replies
            .lock()
            .unwrap()
            .pop_front()
            .expect("script exhausted: unexpected extra call");
        Ok(TransportReply {
            text,
            provider_usage: None,
            latency_ms: 1,
        })
    }
}

fn scripted_pipeline<'a>(
    dataset: &'a TrajectoryDataset,
    graph: &'a TrajectoryGraph,
    replies: &[&str],
) -> (Pipeline<'a, LlmBackend>, Arc<Mutex<Vec<String>>>) {
    let (transport, prompts) = ScriptedTransport::new(replies);
    let client = ChatClient::new(
        ChatEndpointConfig::new("script://test", "scripted"),
        Arc::new(transport),
        None,
    );
    let backend: &'static LlmBackend = Box::leak(Box::new(LlmBackend::new(client, "scripted")));
    let pipeline = Pipeline::new(backend, dataset, graph, PipelineOptions::default()).unwrap();
    (pipeline, prompts)
}

const POI_RANK_CLEAN: &str =
    r#"{"calculation_method": "counted visits", "ranking_analysis": "sorted", "poi_rank": "2, 4, 1, 3"}"#;

// ===== Messy-but-recoverable replies =====

#[test]
fn fenced_prose_and_trailing_commas_are_repaired() {
    let (dataset, graph) = sample();
    let poi_rank_fenced = "Here is my analysis of the data.\n```json\n{\"calculation_method\": \"counted\", \"ranking_analysis\": \"sorted\", \"poi_rank\": \"2, 4, 1, 3\"}\n```\nHope that helps!";
    let discovery_trailing_comma = r#"{"identification_process": "scanned", "candidate_paths": ["1 -> 2 -> 3 -> 4", "1 -> 2 -> 3 -> 4", "1 -> 2 -> 4",]}"#;
    let selection_int_arrays =
        r#"{"evaluation_method": "popularity", "ranked_paths": [[1, 2, 3, 4], [1, 2, 4]]}"#;

    let (pipeline, _) = scripted_pipeline(
        &dataset,
        &graph,
        &[poi_rank_fenced, discovery_trailing_comma, selection_int_arrays],
    );
    let result = pipeline.run_query(q(1, 4)).unwrap();

    assert_eq!(result.route, route(&[1, 2, 3, 4]));
    assert_eq!(result.stage, Stage::Search);
    assert_eq!(result.candidate_count, 2);
    assert!(result.repaired, "trailing comma forced a repair");
    let discovery = &result.calls[0];
    assert_eq!(discovery.agent, AgentKind::Discovery);
    assert!(discovery.repaired);
    let dataset_calls = pipeline.dataset_calls();
    assert!(
        dataset_calls[0].repaired,
        "fenced POI ranking needed stripping"
    );
}

#[test]
fn endpoint_violations_are_dropped_and_missing_segments_flagged() {
    let (dataset, graph) = sample();
    // "2 -> 3" has the wrong source (dropped); "1 -> 3 -> 4" uses the
    // nonexistent segment (1,3) (kept but flagged); "1 -> 2 -> 4" is clean.
    let discovery = r#"{"identification_process": "scan", "candidate_paths": ["2 -> 3", "1 -> 3 -> 4", "1 -> 2 -> 4"]}"#;
    let selection =
        r#"{"evaluation_method": "popularity", "ranked_paths": ["1 -> 2 -> 4", "1 -> 3 -> 4"]}"#;

    let (pipeline, _) =
        scripted_pipeline(&dataset, &graph, &[POI_RANK_CLEAN, discovery, selection]);
    let result = pipeline.run_query(q(1, 4)).unwrap();

    assert_eq!(result.route, route(&[1, 2, 4]));
    assert_eq!(result.candidate_count, 2, "flagged routes stay in play");
    let discovery_call = &result.calls[0];
    assert_eq!(discovery_call.dropped_routes, 1);
    assert_eq!(discovery_call.flagged_routes, 1);
}

#[test]
fn one_reprompt_recovers_a_garbage_reply() {
    let (dataset, graph) = sample();
    let good_discovery = r#"{"identification_process": "scan", "candidate_paths": ["1 -> 2 -> 4"]}"#;
    let selection = r#"{"evaluation_method": "popularity", "ranked_paths": ["1 -> 2 -> 4"]}"#;

    let (pipeline, prompts) = scripted_pipeline(
        &dataset,
        &graph,
        &[POI_RANK_CLEAN, "I cannot answer that.", good_discovery, selection],
    );
    let result = pipeline.run_query(q(1, 4)).unwrap();

    assert_eq!(result.route, route(&[1, 2, 4]));
    assert!(result.repaired);
    assert!(result.calls[0].repaired);

    let prompts = prompts.lock().unwrap();
    assert_eq!(prompts.len(), 4, "poi rank + discovery twice + selection");
    assert!(
        prompts[2].ends_with(
            "Your previous reply could not be parsed. \
             Reply with valid JSON only, following the format above exactly."
        ),
        "re-prompt carries the fix-it reminder"
    );
    assert!(
        prompts[2].starts_with(&prompts[1][..60]),
        "re-prompt repeats the original prompt"
    );
}

#[test]
fn two_garbage_replies_surface_an_agent_error() {
    let (dataset, graph) = sample();
    let (pipeline, prompts) = scripted_pipeline(
        &dataset,
        &graph,
        &[POI_RANK_CLEAN, "garbage", "more garbage"],
    );
    let err = pipeline.run_query(q(1, 4)).unwrap_err();
    match err {
        PipelineError::Backend(BackendError::Agent { agent, .. }) => {
            assert_eq!(agent, AgentKind::Discovery);
        }
        other => panic!("expected an agent error, got {other:?}"),
    }
    assert_eq!(prompts.lock().unwrap().len(), 3, "exactly one re-prompt");
}

#[test]
fn explicitly_empty_discovery_enters_the_generate_stage() {
    let (dataset, graph) = sample();
    let empty_discovery = r#"{"identification_process": "none found", "candidate_paths": []}"#;
    let edge_rank = r#"{"extracted_edges": "all", "analysis_method": "counted", "edge_rank": "(1,2), (2,3), (3,4), (2,4)"}"#;
    let synthesis = r#"{"generation_strategy": "popular segments first", "generated_paths": ["1 -> 2 -> 4", "1 -> 2 -> 3 -> 4"]}"#;
    let selection = r#"{"evaluation_method": "popularity", "ranked_paths": ["1 -> 2 -> 3 -> 4", "1 -> 2 -> 4"]}"#;

    let (pipeline, _) = scripted_pipeline(
        &dataset,
        &graph,
        &[POI_RANK_CLEAN, empty_discovery, edge_rank, synthesis, selection],
    );
    let result = pipeline.run_query(q(1, 4)).unwrap();

    assert_eq!(result.stage, Stage::Generate);
    assert_eq!(result.route, route(&[1, 2, 3, 4]));
    assert!(!result.fallback);
    let agents: Vec<AgentKind> = result.calls.iter().map(|c| c.agent).collect();
    assert_eq!(
        agents,
        vec![
            AgentKind::Discovery,
            AgentKind::RankEdge,
            AgentKind::Synthesis,
            AgentKind::RankPoi,
            AgentKind::Selection,
        ]
    );
    assert!(result.calls[3].memoized, "POI ranking reused, not re-asked");
}

#[test]
fn empty_synthesis_falls_back_to_deterministic_generation() {
    let (dataset, graph) = sample();
    let empty_discovery = r#"{"identification_process": "none", "candidate_paths": []}"#;
    let edge_rank = r#"{"extracted_edges": "all", "analysis_method": "counted", "edge_rank": "(1,2), (2,3), (3,4), (2,4)"}"#;
    let empty_synthesis = r#"{"generation_strategy": "stuck", "generated_paths": []}"#;
    let selection = r#"{"evaluation_method": "popularity", "ranked_paths": ["1 -> 2 -> 3 -> 4", "1 -> 2 -> 4"]}"#;

    let (pipeline, _) = scripted_pipeline(
        &dataset,
        &graph,
        &[POI_RANK_CLEAN, empty_discovery, edge_rank, empty_synthesis, selection],
    );
    let result = pipeline.run_query(q(1, 4)).unwrap();

    assert_eq!(result.stage, Stage::Generate);
    assert!(result.fallback, "deterministic synthesis took over");
    assert_eq!(result.route, route(&[1, 2, 3, 4]));
    let synthesis_calls: Vec<_> = result
        .calls
        .iter()
        .filter(|c| c.agent == AgentKind::Synthesis)
        .collect();
    assert_eq!(synthesis_calls.len(), 2, "the failed ask and the fallback");
    assert!(synthesis_calls[1].repaired);
}

// ===== Stub equivalence at dataset scale =====

#[test]
fn stub_reproduces_oracle_routes_across_a_synthetic_dataset() {
    let output = generate_dataset(&SyntheticConfig::for_scale(13, 150, 3)).unwrap();
    let dataset = output.dataset;
    let graph = TrajectoryGraph::build(&dataset, true);

    let oracle_backend = OracleBackend;
    let oracle_pipeline =
        Pipeline::new(&oracle_backend, &dataset, &graph, PipelineOptions::default()).unwrap();
    let stub_client = ChatClient::new(
        ChatEndpointConfig::new("stub://local", "stub-oracle"),
        Arc::new(StubTransport::new(dataset.clone(), true, 3)),
        None,
    );
    let stub_backend = LlmBackend::new(stub_client, "stub");
    let stub_pipeline =
        Pipeline::new(&stub_backend, &dataset, &graph, PipelineOptions::default()).unwrap();

    let mut checked = 0;
    for mode in [EvalMode::Search, EvalMode::Generate] {
        for query in enumerate_queries(&dataset, &graph, mode, Some(25), 9) {
            let oracle_result = oracle_pipeline.run_query(query).unwrap();
            let stub_result = stub_pipeline.run_query(query).unwrap();
            assert_eq!(
                oracle_result.route, stub_result.route,
                "{query:?} diverged in {mode}"
            );
            assert_eq!(oracle_result.stage, stub_result.stage);
            checked += 1;
        }
    }
    assert!(checked >= 30, "only {checked} queries were eligible");
}

// ===== HTTP transport against a local server =====

struct Canned {
    status: u16,
    body: String,
}

fn ok_envelope(content: &str, usage: Option<(u64, u64)>) -> Canned {
    let usage_part = match usage {
        Some((p, c)) => {
            format!(", \"usage\": {{\"prompt_tokens\": {p}, \"completion_tokens\": {c}}}")
        }
        None => String::new(),
    };
    let content = serde_json::to_string(content).unwrap();
    Canned {
        status: 200,
        body: format!(
            "{{\"choices\": [{{\"message\": {{\"role\": \"assistant\", \"content\": {content}}}}}]{usage_part}}}"
        ),
    }
}

fn status_reply(status: u16, body: &str) -> Canned {
    Canned {
        status,
        body: body.to_string(),
    }
}

/// Serve exactly `script.len()` requests on a loopback port, recording each
/// request's full text (headers + body).
fn serve(script: Vec<Canned>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    std::thread::spawn(move || {
        for canned in script {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                if let Some(rest) = line
                    .to_ascii_lowercase()
                    .strip_prefix("content-length:")
                    .map(str::trim)
                    .and_then(|v| v.parse::<usize>().ok())
                {
                    content_length = rest;
                }
                let done = line == "\r\n" || line == "\n";
                request.push_str(&line);
                if done {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            request.push_str(&String::from_utf8_lossy(&body));
            seen.lock().unwrap().push(request);

            let reason = match canned.status {
                200 => "OK",
                429 => "Too Many Requests",
                500 => "Internal Server Error",
                _ => "Status",
            };
            let response = format!(
                "HTTP/1.1 {} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                canned.status,
                reason,
                canned.body.len(),
                canned.body
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (url, requests)
}

fn fast_endpoint(url: &str) -> ChatEndpointConfig {
    let mut endpoint = ChatEndpointConfig::new(url, "test-model");
    endpoint.retry_backoff_ms = 1;
    endpoint.timeout_secs = 10;
    endpoint
}

#[test]
fn http_client_retries_429_then_succeeds() {
    let (url, requests) = serve(vec![
        status_reply(429, "{\"error\": \"slow down\"}"),
        ok_envelope("{\"poi_rank\": \"1, 2\"}", None),
    ]);
    let client = ChatClient::over_http(fast_endpoint(&url), None);
    let outcome = client.invoke("rank the POIs").unwrap();
    assert_eq!(outcome.text, "{\"poi_rank\": \"1, 2\"}");
    assert!(!outcome.cache_hit);

    let requests = requests.lock().unwrap();
    assert_eq!(requests.len(), 2, "one retry after the 429");
    assert!(requests[1].contains("\"model\":\"test-model\""));
    assert!(requests[1].contains("rank the POIs"));
}

#[test]
fn http_client_reports_exhausted_rate_limit() {
    let (url, requests) = serve(vec![
        status_reply(429, "{}"),
        status_reply(429, "{}"),
    ]);
    let mut endpoint = fast_endpoint(&url);
    endpoint.max_retries = 1;
    let client = ChatClient::over_http(endpoint, None);
    match client.invoke("hello") {
        Err(LlmError::RateLimited { attempts }) => assert_eq!(attempts, 2),
        other => panic!("expected RateLimited, got {other:?}"),
    }
    assert_eq!(requests.lock().unwrap().len(), 2);
}

#[test]
fn http_client_retries_server_errors() {
    let (url, requests) = serve(vec![
        status_reply(500, "oops"),
        ok_envelope("fine now", None),
    ]);
    let client = ChatClient::over_http(fast_endpoint(&url), None);
    assert_eq!(client.invoke("x").unwrap().text, "fine now");
    assert_eq!(requests.lock().unwrap().len(), 2);
}

#[test]
fn provider_token_counts_win_over_the_heuristic() {
    let (url, _) = serve(vec![ok_envelope("short", Some((1234, 17)))]);
    let client = ChatClient::over_http(fast_endpoint(&url), None);
    let outcome = client.invoke("count me").unwrap();
    assert_eq!(outcome.usage.prompt_tokens, 1234);
    assert_eq!(outcome.usage.completion_tokens, 17);
    assert_eq!(outcome.usage.source, UsageSource::Provider);
}

#[test]
fn bearer_token_is_read_from_the_named_env_var() {
    let (url, requests) = serve(vec![ok_envelope("ok", None)]);
    std::env::set_var("POPROUTE_TEST_BEARER", "secret-token-123");
    let mut endpoint = fast_endpoint(&url);
    endpoint.api_key_env = Some("POPROUTE_TEST_BEARER".into());
    let client = ChatClient::over_http(endpoint, None);
    client.invoke("x").unwrap();
    let requests = requests.lock().unwrap();
    assert!(
        requests[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer secret-token-123"),
        "bearer header missing:\n{}",
        requests[0]
    );
}

#[test]
fn missing_api_key_fails_before_any_request() {
    let (url, requests) = serve(vec![]);
    let mut endpoint = fast_endpoint(&url);
    endpoint.api_key_env = Some("POPROUTE_TEST_UNSET_VAR_XYZ".into());
    let client = ChatClient::over_http(endpoint, None);
    match client.invoke("x") {
        Err(LlmError::MissingApiKey(var)) => assert_eq!(var, "POPROUTE_TEST_UNSET_VAR_XYZ"),
        other => panic!("expected MissingApiKey, got {other:?}"),
    }
    assert!(requests.lock().unwrap().is_empty());
}

#[test]
fn cached_replies_replay_without_touching_the_network() {
    let cache_dir = tempfile::tempdir().unwrap();
    // The server holds exactly one response; a second network request
    // would hit a closed listener and fail the test.
    let (url, requests) = serve(vec![ok_envelope("the answer", Some((9, 3)))]);
    let endpoint = fast_endpoint(&url);

    let live = ChatClient::over_http(
        endpoint.clone(),
        Some(LlmCache::open(cache_dir.path()).unwrap()),
    );
    let first = live.invoke("same prompt").unwrap();
    assert!(!first.cache_hit);

    let warm = ChatClient::over_http(
        endpoint,
        Some(LlmCache::open(cache_dir.path()).unwrap()),
    );
    let second = warm.invoke("same prompt").unwrap();
    assert!(second.cache_hit);
    assert_eq!(second.text, first.text);
    assert_eq!(second.usage.prompt_tokens, first.usage.prompt_tokens);
    assert_eq!(
        second.latency_ms, first.latency_ms,
        "cached replay reports the original latency"
    );
    assert_eq!(requests.lock().unwrap().len(), 1, "no second request");
}

// ===== Optional live round trip =====

/// Exercises a real endpoint when POPROUTE_LIVE_BASE_URL and
/// POPROUTE_LIVE_MODEL are set (plus optional POPROUTE_LIVE_API_KEY_ENV
/// naming the variable that holds the bearer token). Runs the same query
/// twice; the second pass must come entirely from the reply cache.
#[test]
fn live_endpoint_round_trip_with_cache_replay() {
    let (Ok(base_url), Ok(model)) = (
        std::env::var("POPROUTE_LIVE_BASE_URL"),
        std::env::var("POPROUTE_LIVE_MODEL"),
    ) else {
        eprintln!("live round trip skipped: POPROUTE_LIVE_BASE_URL / POPROUTE_LIVE_MODEL unset");
        return;
    };
    let mut endpoint = ChatEndpointConfig::new(base_url, model);
    endpoint.api_key_env = std::env::var("POPROUTE_LIVE_API_KEY_ENV").ok();

    let (dataset, graph) = sample();
    let cache_dir = tempfile::tempdir().unwrap();
    let mut routes = Vec::new();
    for pass in 0..2 {
        let cache = LlmCache::open(cache_dir.path()).unwrap();
        let client = ChatClient::over_http(endpoint.clone(), Some(cache));
        let backend = LlmBackend::new(client, format!("llm:{}", endpoint.model));
        let pipeline =
            Pipeline::new(&backend, &dataset, &graph, PipelineOptions::default()).unwrap();
        let result = pipeline.run_query(q(1, 4)).unwrap();
        if pass == 1 {
            assert!(
                result.calls.iter().all(|c| c.cache_hit || c.memoized),
                "second pass must replay from cache"
            );
        }
        routes.push(result.route);
    }
    assert_eq!(routes[0], routes[1], "cache replay changed the answer");
}
