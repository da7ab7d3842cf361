//! Runs one fixture episode in every mode against its scripted transcript
//! and prints the trajectory and answer.

use std::sync::Arc;

use cov_core::agent::{prepare_episode, run_episode, AgentConfig, LoopBudget, RunMode};
use cov_core::gateway::{ScriptedBackend, ScriptedTranscript};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir();
    let suite = cov_core::fixtures::write_suite(&dir)?;
    let f = &cov_core::fixtures::all()[0];
    let episode = cov_core::scene_io::load_episode(&suite.episodes[0], Default::default())?;
    let cfg = AgentConfig {
        budget: LoopBudget {
            min_steps: 3,
            max_steps: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let prep = prepare_episode(&episode, Arc::new(f.scene.clone()), &cfg)?;
    println!("question: {}", episode.question);
    for mode in [RunMode::Baseline, RunMode::Cov, RunMode::NoSelection] {
        let backend = ScriptedBackend::new(ScriptedTranscript::load(suite.script_dir.join(format!("{}.json", f.episode_id)))?);
        let run = run_episode(&prep, mode, &backend, &cfg);
        let r = &run.result;
        println!("\n[{mode}] anchors {:?}", r.anchor_frame_indices);
        for s in &r.trajectory {
            let c = s.pose.center();
            println!("  step {}: {:<16} -> ({:.2}, {:.2}, {:.2})", s.step, s.action.verb(), c[0], c[1], c[2]);
        }
        println!("  answer {:?} ({:?}, {} requests)", r.answer, r.termination, r.request_count);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join(format!("cov_scripted_{}", std::process::id()))
}
