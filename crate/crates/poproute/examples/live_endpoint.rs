//! Run the pipeline against a real chat-completion endpoint, with on-disk
//! reply caching so a second run replays byte-identical answers without
//! touching the network.
//!
//! Gated behind environment variables so the example suite stays offline:
//!
//! ```text
//! POPROUTE_BASE_URL=https://api.example.com/v1   # chat-completions root
//! POPROUTE_MODEL=some-model-name
//! POPROUTE_API_KEY_ENV=MY_KEY_VAR                # optional: var holding the bearer token
//! POPROUTE_CACHE_DIR=./llm-cache                 # optional: default shown
//! cargo run -p poproute --example live_endpoint
//! ```

use std::path::PathBuf;

use poproute::backend::LlmBackend;
use poproute::llm::{ChatClient, ChatEndpointConfig, LlmCache};
use poproute::orchestrator::{Pipeline, PipelineOptions};
use poproute::trajectory::{PoiId, Query, TrajectoryDataset, TrajectoryGraph};

fn main() {
    let (Ok(base_url), Ok(model)) = (
        std::env::var("POPROUTE_BASE_URL"),
        std::env::var("POPROUTE_MODEL"),
    ) else {
        println!("live run not configured; set POPROUTE_BASE_URL and POPROUTE_MODEL");
        println!("(optional: POPROUTE_API_KEY_ENV names the variable holding the bearer token,");
        println!(" POPROUTE_CACHE_DIR picks the reply-cache directory)");
        return;
    };

    let cache_dir = std::env::var("POPROUTE_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("llm-cache"));
    let mut endpoint = ChatEndpointConfig::new(base_url, model);
    // The key itself never appears in config or output; only the variable
    // name travels, and the client reads it at request time.
    endpoint.api_key_env = std::env::var("POPROUTE_API_KEY_ENV").ok();

    let text = "\
1 -> 2 -> 3 -> 4
1 -> 2 -> 4
2 -> 3 -> 4
1 -> 2 -> 3 -> 4
";
    let dataset = TrajectoryDataset::parse(text).expect("well-formed dataset");
    let graph = TrajectoryGraph::build(&dataset, true);

    for pass in 1..=2 {
        let cache = LlmCache::open(&cache_dir).expect("cache dir");
        let client = ChatClient::over_http(endpoint.clone(), Some(cache));
        let name = format!("llm:{}", endpoint.model);
        let backend = LlmBackend::new(client, name);
        let pipeline = Pipeline::new(&backend, &dataset, &graph, PipelineOptions::default())
            .expect("poi ranking call succeeds");

        let query = Query::new(PoiId(1), PoiId(4)).unwrap();
        match pipeline.run_query(query) {
            Ok(result) => {
                let usage = result.usage();
                let hits = result.calls.iter().filter(|c| c.cache_hit).count();
                println!(
                    "pass {pass}: route {} (stage {}), {} prompt + {} completion tokens, \
                     {} of {} calls from cache",
                    result.route,
                    result.stage,
                    usage.prompt_tokens,
                    usage.completion_tokens,
                    hits,
                    result.calls.len()
                );
            }
            Err(e) => {
                eprintln!("pass {pass} failed: {e}");
                std::process::exit(2);
            }
        }
    }

    let cache = LlmCache::open(&cache_dir).expect("cache dir");
    let stats = cache.stats().expect("cache readable");
    println!(
        "cache now holds {} replies ({} bytes) in {}",
        stats.entries,
        stats.bytes,
        cache_dir.display()
    );
    println!("second pass should report every call as a cache hit");
}
