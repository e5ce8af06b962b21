//! Runs every pipeline stage on a synthetic graph, with the encoder and
//! LLM served by in-process mock services.
//!
//! cargo run --release --example full_pipeline

use std::collections::HashMap;

use kgrag::embeddings::HashEncoder;
use kgrag::mock::{mock_encoder, mock_llm};
use kgrag::pipeline::{generate_synthetic, run_stage, PipelineConfig, Stage, SyntheticKgSpec};
use serde_json::json;

fn main() -> kgrag::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    // an oracle LLM that knows the answer to every other test question
    let data = generate_synthetic(&SyntheticKgSpec::default())?;
    let replies: HashMap<String, String> = data
        .test
        .iter()
        .step_by(2)
        .map(|q| (q.question.clone(), format!("ans: {}", q.answers[0])))
        .collect();
    let llm = mock_llm(replies, "ans: not available")?;
    let encoder = mock_encoder(HashEncoder::new(32, 0))?;

    let doc = json!({
        "retriever": {"hops": 3, "top_k": 20},
        "train": {"epochs": 10, "hidden": [64, 64], "batch_size": 128},
        "encoder": {"kind": "http", "endpoint": encoder.url()},
        "reasoner": {"llm": {"endpoint": llm.url()}},
    });
    let cfg = PipelineConfig::from_json(&doc.to_string(), &[], dir.path())?;
    for stage in [
        Stage::Synth,
        Stage::Ingest,
        Stage::Label,
        Stage::Embed,
        Stage::Train,
        Stage::Retrieve,
        Stage::Reason,
        Stage::Eval,
    ] {
        let out = run_stage(stage, &cfg)?;
        println!("{:<9} {}", stage.name(), out.summary);
    }
    print!("{}", std::fs::read_to_string(cfg.paths.work_dir.join("report.txt")).expect("report"));
    Ok(())
}
