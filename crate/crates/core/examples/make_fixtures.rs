//! Writes the synthetic fixture suite (scenes, episodes, scripts, manifest
//! and a runnable `cov.toml`) into a directory.
//!
//! ```text
//! cargo run --example make_fixtures -- /tmp/cov-suite
//! cov run --config /tmp/cov-suite/cov.toml
//! ```

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "cov-suite".into());
    let suite = cov_core::fixtures::write_suite(&dir)?;
    println!("manifest: {}", suite.manifest.display());
    println!("config:   {}", suite.config.display());
    for e in &suite.episodes {
        println!("episode:  {}", e.display());
    }
    Ok(())
}
