//! Dataset-scale evaluation: generate a synthetic dataset, answer every
//! eligible query through the stub backend in parallel, and write the
//! CSV/JSON reports the harness produces.
//!
//! Run: `cargo run -p poproute --example evaluate`

use poproute::harness::{run_eval, BackendChoice, RunConfig, RunMode};
use poproute::synthetic::{generate_dataset, write_dataset_files, SyntheticConfig};

fn main() {
    let work_dir = std::env::temp_dir().join("poproute-evaluate-example");
    std::fs::create_dir_all(&work_dir).expect("temp dir");

    // A small synthetic park with known popular structure.
    let dataset_path = work_dir.join("park.txt");
    let output = generate_dataset(&SyntheticConfig::for_scale(13, 150, 5))
        .expect("valid configuration");
    write_dataset_files(&output, &dataset_path).expect("writable temp dir");
    println!(
        "dataset: {} trajectories over {} POIs at {}",
        output.stats.n_trajectories,
        output.stats.n_nodes,
        dataset_path.display()
    );

    // Evaluate both query populations, capped for a fast demo, with four
    // worker threads.
    let mut config = RunConfig::new(vec![dataset_path], work_dir.join("reports"));
    config.backend = BackendChoice::Stub;
    config.mode = RunMode::Both;
    config.limit = Some(25);
    config.seed = 11;
    config.parallelism = 4;
    config.run_label = Some("example".into());

    let summary = run_eval(&config).expect("evaluation runs");

    println!(
        "\nanswered {} queries ({} errors)",
        summary.queries_run, summary.errors
    );
    for row in &summary.aggregates {
        let f1 = row
            .f1
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        let trav = row
            .traversability
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {} [{}]: f1={} traversability={} tokens={}+{} ({})",
            row.dataset, row.stage, f1, trav, row.prompt_tokens, row.completion_tokens, row.flags
        );
    }
    println!(
        "\ntoken spend: {} prompt + {} completion ({})",
        summary.token_totals.prompt_tokens,
        summary.token_totals.completion_tokens,
        summary.token_totals.source
    );
    println!("reports written:");
    for file in &summary.files {
        println!("  {}", file.display());
    }
}
