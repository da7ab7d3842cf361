//! Sweeps the minimum step count over the fixture suite with the
//! hidden-object oracle, which only names the target after three actions.

use cov_core::harness::{sweep, BackendKind, HarnessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("cov_sweep_{}", std::process::id()));
    let suite = cov_core::fixtures::write_suite(&dir)?;
    let mut cfg = HarnessConfig::load(&suite.config)?;
    cfg.backend.kind = BackendKind::Oracle;
    cfg.backend.oracle_k = 3;
    let report = sweep(&cfg, &[0, 1, 2, 3, 4, 5])?;
    print!("{}", report.table());
    for row in &report.rows {
        println!("min_steps {}: step histogram {:?}", row.min_steps, row.step_histogram);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
