//! Batch runner behind the `cov` binary: configuration, per-episode
//! backends, resumable runs, step sweeps, scoring and artifact export.
//!
//! A run directory looks like
//!
//! ```text
//! <run>/report.json
//! <run>/judge_cache.jsonl
//! <run>/<episode>/result.json
//! <run>/<episode>/transcript.jsonl
//! <run>/<episode>/trajectory.json
//! <run>/<episode>/birds_eye.png
//! <run>/<episode>/steps/<t>.png, <t>.json
//! ```
//!
//! `result.json` is written last, so its presence marks a finished episode.

mod config;
mod export;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    BackendKind, BackendSection, BudgetSection, ConfigBackendFactory, EvalSection, HarnessConfig, JudgeKind, JudgeSection,
    Overrides, RunSection,
};
pub use export::{
    export_trajectory, load_trajectory, parse_intrinsics_spec, parse_pose_spec, render_to_file, trajectory_svg, TrajFormat,
    TrajectoryFile, ViewSpec, FRUSTUM_DEPTH_M, FRUSTUM_HALF_FOV_DEG,
};
pub use runner::{
    export_session, judge_key, load_manifest, run, run_with, score_run, sweep, sweep_with, EpisodeRow, RunOutcome, RunReport,
    ScoreOutcome, SweepReport, SweepRow,
};

use crate::gateway::{ChatBackend, GatewayError};
use crate::scene_io::Episode;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Scene(#[from] crate::scene_io::SceneError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("no trajectory for episode {episode_id} in {}", run_dir.display())]
    MissingTrajectory { episode_id: String, run_dir: PathBuf },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Json { path, source }
    }
}

/// Builds the model backend used for one episode.
pub trait BackendFactory: Send + Sync {
    fn for_episode(&self, episode: &Episode) -> Result<Box<dyn ChatBackend>, HarnessError>;
}

impl<F> BackendFactory for F
where
    F: Fn(&Episode) -> Result<Box<dyn ChatBackend>, HarnessError> + Send + Sync,
{
    fn for_episode(&self, episode: &Episode) -> Result<Box<dyn ChatBackend>, HarnessError> {
        self(episode)
    }
}
