//! Runs one fixture episode against an OpenAI-compatible endpoint and
//! records every response so the run can be replayed offline.
//!
//! ```text
//! OPENAI_API_KEY=... cargo run --example openai_episode -- [endpoint] [model]
//! ```

use std::sync::Arc;

use cov_core::agent::{prepare_episode, run_cov, AgentConfig, LoopBudget};
use cov_core::gateway::{BackendConfig, OpenAiBackend, RecordReplay};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut config = BackendConfig::default();
    if let Some(e) = args.next() {
        config.endpoint = e;
    }
    if let Some(m) = args.next() {
        config.model_name = m;
    }
    if std::env::var(&config.api_key_env).is_err() {
        eprintln!("{} is not set", config.api_key_env);
        std::process::exit(1);
    }
    let f = &cov_core::fixtures::all()[0];
    let episode = f.episode(std::path::Path::new("unused.ply"));
    let cfg = AgentConfig {
        budget: LoopBudget {
            min_steps: 2,
            max_steps: 6,
            ..Default::default()
        },
        subsample_ratio: 4,
        ..Default::default()
    };
    let prep = prepare_episode(&episode, Arc::new(f.scene.clone()), &cfg)?;
    let session = std::env::temp_dir().join("cov_openai_session.jsonl");
    let backend = RecordReplay::record(Box::new(OpenAiBackend::new(config)?), &session)?;
    let run = run_cov(&prep, &backend, &cfg);
    for s in &run.result.trajectory {
        println!("step {}: {}", s.step, s.action.verb());
    }
    println!("answer: {:?} ({:?})", run.result.answer, run.result.termination);
    println!("ground truth: {:?}", episode.ground_truth);
    println!("session recorded to {}", session.display());
    Ok(())
}
