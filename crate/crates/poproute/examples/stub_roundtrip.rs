//! The stub transport: a local responder that parses each prompt and
//! answers it with deterministically computed JSON. It drives the entire
//! prompt/reply/validation machinery with zero network and reproduces the
//! oracle's answers byte for byte — the backbone of offline testing.
//!
//! Run: `cargo run -p poproute --example stub_roundtrip`

use std::sync::Arc;

use poproute::backend::{LlmBackend, OracleBackend};
use poproute::llm::{
    render_prompt, AgentKind, ChatClient, ChatEndpointConfig, ChatTransport, PromptContext,
    StubTransport,
};
use poproute::orchestrator::{Pipeline, PipelineOptions};
use poproute::trajectory::{PoiId, Query, TrajectoryDataset, TrajectoryGraph};

fn main() {
    let text = "\
1 -> 2 -> 3 -> 4
1 -> 2 -> 4
2 -> 3 -> 4
1 -> 2 -> 3 -> 4
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);

    // Peek at one exchange: the discovery prompt and the stub's raw reply.
    let query = Query::new(PoiId(1), PoiId(4)).unwrap();
    let prompt = render_prompt(
        AgentKind::Discovery,
        &PromptContext {
            trajectories: Some(dataset.trajectories()),
            query: Some(query),
            ..Default::default()
        },
    )
    .unwrap();
    let transport = StubTransport::new(dataset.clone(), true, 3);
    let endpoint = ChatEndpointConfig::new("stub://local", "stub-oracle");
    let reply = transport.complete(&endpoint, &prompt).expect("stub never fails");
    println!("raw stub reply to the discovery prompt:\n{}\n", reply.text);

    // Full pipelines over both backends.
    let oracle_backend = OracleBackend;
    let oracle_pipeline = Pipeline::new(
        &oracle_backend,
        &dataset,
        &graph,
        PipelineOptions::default(),
    )
    .expect("pipeline setup");

    let client = ChatClient::new(endpoint, Arc::new(transport), None);
    let stub_backend = LlmBackend::new(client, "stub");
    let stub_pipeline =
        Pipeline::new(&stub_backend, &dataset, &graph, PipelineOptions::default())
            .expect("pipeline setup");

    println!("oracle vs stub on every answerable pair:");
    for (s, d) in [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)] {
        let query = Query::new(PoiId(s), PoiId(d)).unwrap();
        let oracle_result = oracle_pipeline.run_query(query).expect("eligible");
        let stub_result = stub_pipeline.run_query(query).expect("eligible");
        assert_eq!(
            oracle_result.route, stub_result.route,
            "stub must reproduce the oracle"
        );
        let usage = stub_result.usage();
        println!(
            "  {s} to {d}: {}   [stage {}, {} prompt + {} completion tokens through the stub]",
            stub_result.route,
            stub_result.stage,
            usage.prompt_tokens,
            usage.completion_tokens
        );
    }
    println!("\nevery route identical; the stub spent tokens, the oracle spent none");
}
