use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cov_core::agent::RunMode;
use cov_core::harness::{
    self, export_trajectory, parse_intrinsics_spec, parse_pose_spec, render_to_file, HarnessConfig, HarnessError, Overrides,
    TrajFormat, ViewSpec,
};
use cov_core::render::RenderSettings;

#[derive(Parser)]
#[command(name = "cov", about = "Run, sweep, score and inspect embodied QA episodes", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "cov.toml")]
    config: PathBuf,
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long)]
    min_steps: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Frame subsampling ratio.
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    backend_endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Serve responses from a recorded session file.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Re-run episodes that already have a result.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<HarnessConfig, HarnessError> {
        let mut cfg = HarnessConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            mode: self.mode,
            min_steps: self.min_steps,
            max_steps: self.max_steps,
            ratio: self.ratio,
            backend_endpoint: self.backend_endpoint.clone(),
            model: self.model.clone(),
            replay: self.replay.clone(),
            force: self.force,
            workers: self.workers,
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every manifest episode and write report.json.
    Run(Common),
    /// Run cov mode once per minimum step count.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated minimum step counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7")]
        steps: Vec<usize>,
    },
    /// Re-judge a run directory.
    Score {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run directory named by the config.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Render one view of a scene to PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// `identity` or 16 row-major numbers.
        #[arg(long, conflicts_with = "birds_eye")]
        pose: Option<String>,
        #[arg(long)]
        birds_eye: bool,
        /// fx,fy,cx,cy,width,height
        #[arg(long, default_value = "500,500,320,240,640,480")]
        intrinsics: String,
        #[arg(long)]
        splat_radius: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export an episode's camera path as JSON poses or SVG frusta.
    ExportTraj {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        episode: String,
        #[arg(long, default_value = "svg")]
        format: TrajFormat,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.cmd {
        Cmd::Run(common) => {
            let cfg = common.load()?;
            let out = harness::run(&cfg)?;
            println!("{}", out.report.score.table());
            println!(
                "run dir {}: {} executed, {} skipped",
                out.run_dir.display(),
                out.executed.len(),
                out.skipped.len()
            );
            if out.failed().is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} episode(s) failed: {}", out.failed().len(), out.failed().join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Sweep { common, steps } => {
            let cfg = common.load()?;
            let report = harness::sweep(&cfg, &steps)?;
            print!("{}", report.table());
            let failed: usize = report.rows.iter().map(|r| r.failed).sum();
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Score { common, run_dir } => {
            let cfg = common.load()?;
            let dir = run_dir.unwrap_or_else(|| cfg.run_dir());
            let judge = cfg.judge.backend()?;
            let templates = cfg.agent_config()?.templates;
            let out = harness::score_run(&dir, judge.as_deref(), &templates, cfg.judge.options())?;
            println!("{}", out.report.score.table());
            println!("judge calls: {}", out.judge_calls);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Render {
            scene,
            pose,
            birds_eye,
            intrinsics,
            splat_radius,
            out,
        } => {
            let view = if birds_eye {
                ViewSpec::BirdsEye
            } else {
                let pose = pose.ok_or_else(|| HarnessError::Config("render needs --pose or --birds-eye".into()))?;
                ViewSpec::Pose(parse_pose_spec(&pose)?, parse_intrinsics_spec(&intrinsics)?)
            };
            let mut settings = RenderSettings::default();
            if let Some(r) = splat_radius {
                settings.splat_radius_px = r;
            }
            render_to_file(&scene, view, &settings, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ExportTraj {
            run_dir,
            episode,
            format,
            out,
        } => {
            let text = export_trajectory(&run_dir, &episode, format)?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|source| HarnessError::Io { path: p, source })?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
