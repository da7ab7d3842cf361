//! Runs the fixture suite and writes each episode's camera path as SVG
//! frusta over its bird's-eye view.
//!
//! ```text
//! cargo run --example export_trajectory -- out/
//! ```

use cov_core::harness::{export_trajectory, run, HarnessConfig, TrajFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "trajectories".into()));
    std::fs::create_dir_all(&out)?;
    let dir = std::env::temp_dir().join(format!("cov_traj_{}", std::process::id()));
    let suite = cov_core::fixtures::write_suite(&dir)?;
    let cfg = HarnessConfig::load(&suite.config)?;
    let outcome = run(&cfg)?;
    for e in &outcome.report.episodes {
        let svg = export_trajectory(&outcome.run_dir, &e.episode_id, TrajFormat::Svg)?;
        let path = out.join(format!("{}.svg", e.episode_id));
        std::fs::write(&path, svg)?;
        println!("{} ({} steps)", path.display(), e.step_count);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
