//! The two-stage agent: view selection, then the action-reasoning loop.
//!
//! [`run_episode`] is the entry point. It never returns an error: a failed
//! episode comes back with [`Termination::Failed`] and a failure message so
//! that batch runs continue.

mod context;

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{AgentContext, AnchorView, ContextEntry, ContextError, ContextImage};

use crate::gateway::{request_hash, ChatBackend, ChatMessage, GatewayError, Part, Role};
use crate::geometry::{apply_action, Action, CameraPose, GeometryError, MotionConfig};
use crate::prompts::{
    render_baseline, render_cov_step, render_view_select, CovPromptOptions, Framing, PromptError, SelectFrame,
    TemplateSet,
};
use crate::protocol::{parse_selection, parse_step, Decision, SelectionMode};
use crate::render::{load_image, render_birds_eye, render_view, Observation, Provenance, RenderError, RenderSettings};
use crate::scene_io::{subsample_frames, Aabb, Episode, FrameRecord, SceneError, ScenePointCloud};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend failure during {phase}: {source}")]
    Backend {
        phase: Phase,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Select,
    Step,
    Baseline,
    Judge,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Select => "view selection",
            Phase::Step => "reasoning step",
            Phase::Baseline => "baseline answer",
            Phase::Judge => "judging",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Baseline,
    Cov,
    NoSelection,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Baseline => "baseline",
            RunMode::Cov => "cov",
            RunMode::NoSelection => "no-selection",
        }
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(RunMode::Baseline),
            "cov" => Ok(RunMode::Cov),
            "no-selection" => Ok(RunMode::NoSelection),
            other => Err(format!("unknown mode {other:?} (expected baseline, cov or no-selection)")),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopBudget {
    pub min_steps: usize,
    pub max_steps: usize,
    /// Corrective re-prompts per step before forcing an answer.
    pub max_parse_retries: usize,
    /// Early answers rejected before the loop gives up and keeps one.
    pub max_nudges: usize,
}

impl Default for LoopBudget {
    fn default() -> Self {
        LoopBudget {
            min_steps: 0,
            max_steps: 12,
            max_parse_retries: 1,
            max_nudges: 8,
        }
    }
}

impl LoopBudget {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps < self.min_steps.max(1) {
            return Err(format!(
                "max_steps ({}) must be at least max(1, min_steps = {})",
                self.max_steps, self.min_steps
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// A final answer at or after the step minimum.
    Answered,
    /// The step cap was reached and the model was told to answer.
    StepCapForced,
    /// Replies kept failing to parse and the model was told to answer.
    ParseForced,
    /// The model kept answering below the step minimum.
    NudgeCapForced,
    /// The episode aborted; see `failure`.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub budget: LoopBudget,
    pub motion: MotionConfig,
    pub render: RenderSettings,
    pub k_max: usize,
    pub selection_mode: SelectionMode,
    pub framing: Framing,
    /// Image cap per loop request; oldest rendered views are evicted.
    pub context_max_images: Option<usize>,
    /// Image limit of the backend, checked for selection and baseline.
    pub backend_max_images: usize,
    pub subsample_ratio: usize,
    /// Render anchor views from the point cloud instead of using photos.
    pub rerender_anchors: bool,
    pub templates: TemplateSet,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            budget: LoopBudget::default(),
            motion: MotionConfig::default(),
            render: RenderSettings::default(),
            k_max: 6,
            selection_mode: SelectionMode::Lenient,
            framing: Framing::Interleaved,
            context_max_images: None,
            backend_max_images: 64,
            subsample_ratio: 10,
            rerender_anchors: false,
            templates: TemplateSet::builtin(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.budget.validate()?;
        self.motion.validate()?;
        self.render.validate()?;
        if self.k_max == 0 {
            return Err("k_max must be at least 1".into());
        }
        if self.subsample_ratio == 0 {
            return Err("subsample ratio must be at least 1".into());
        }
        Ok(())
    }

    fn cov_options(&self) -> CovPromptOptions {
        CovPromptOptions {
            min_steps: self.budget.min_steps,
            max_steps: self.budget.max_steps,
            framing: self.framing,
            max_images: self.context_max_images,
            motion: self.motion,
        }
    }
}

/// An episode with its frames subsampled and every view encoded.
#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub episode: Episode,
    pub frames: Vec<FrameRecord>,
    pub frame_images: Vec<ContextImage>,
    pub scene: Arc<ScenePointCloud>,
    pub birds_eye: ContextImage,
    /// Subsampled frames shown as renders because no photo was used.
    pub rendered_frames: Vec<usize>,
}

impl PreparedEpisode {
    pub fn bounds(&self) -> &Aabb {
        self.scene.aabb()
    }
}

pub fn prepare_episode(episode: &Episode, scene: Arc<ScenePointCloud>, cfg: &AgentConfig) -> Result<PreparedEpisode, AgentError> {
    let frames = subsample_frames(&episode.frames, cfg.subsample_ratio);
    let mut frame_images = Vec::with_capacity(frames.len());
    let mut rendered_frames = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let path = episode.resolved_image_path(f);
        let photo = if cfg.rerender_anchors || !path.is_file() {
            None
        } else {
            Some(load_image(&path)?)
        };
        let obs = match photo {
            Some(image) => Observation {
                image,
                pose: f.pose,
                step_index: 0,
                provenance: Provenance::AnchorFrame { frame_index: i },
            },
            None => {
                rendered_frames.push(i);
                let mut o = render_view(&scene, &f.pose, &f.intrinsics, &cfg.render);
                o.provenance = Provenance::AnchorFrame { frame_index: i };
                o
            }
        };
        frame_images.push(ContextImage::from_observation(&obs)?);
    }
    let birds_eye = ContextImage::from_observation(&render_birds_eye(&scene, &cfg.render))?;
    Ok(PreparedEpisode {
        episode: episode.clone(),
        frames,
        frame_images,
        scene,
        birds_eye,
        rendered_frames,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoggedPart {
    Text { text: String },
    Image { media_type: String, sha256: String, bytes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub role: Role,
    pub parts: Vec<LoggedPart>,
}

impl LoggedMessage {
    pub fn from_message(m: &ChatMessage) -> Self {
        LoggedMessage {
            role: m.role,
            parts: m
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => LoggedPart::Text { text: t.clone() },
                    Part::Image { data, media_type } => LoggedPart::Image {
                        media_type: media_type.clone(),
                        sha256: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(data)),
                        bytes: data.len(),
                    },
                })
                .collect(),
        }
    }
}

/// One backend call as written to `transcript.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: usize,
    pub phase: Phase,
    /// Steps taken when the request was made.
    pub step: usize,
    pub request_hash: String,
    pub messages: Vec<LoggedMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Sends requests and keeps a record of each.
#[derive(Debug, Default)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn call(&mut self, backend: &dyn ChatBackend, phase: Phase, step: usize, messages: &[ChatMessage]) -> Result<String, AgentError> {
        let result = backend.complete(messages);
        self.records.push(TranscriptRecord {
            seq: self.records.len(),
            phase,
            step,
            request_hash: request_hash(messages),
            messages: messages.iter().map(LoggedMessage::from_message).collect(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        result.map_err(|source| AgentError::Backend { phase, source })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub indices: Vec<usize>,
    pub mode: SelectionMode,
    /// Parsing failed after retries and the first `k_max` frames were used.
    pub fallback_selection: bool,
    /// The lenient integer scan produced the indices.
    pub lenient_scan: bool,
    pub attempts: usize,
}

/// Asks the backend which subsampled frames to keep. Indices refer to the
/// subsampled numbering.
pub fn select_views(prep: &PreparedEpisode, backend: &dyn ChatBackend, cfg: &AgentConfig, log: &mut Transcript) -> Result<SelectionOutcome, AgentError> {
    let frames: Vec<SelectFrame> = prep
        .frame_images
        .iter()
        .enumerate()
        .map(|(index, image)| SelectFrame { index, image })
        .collect();
    let n = frames.len();
    let mut messages = render_view_select(&cfg.templates, &prep.episode.question, &frames, cfg.k_max, cfg.backend_max_images)?;
    let attempts_allowed = cfg.budget.max_parse_retries + 1;
    for attempt in 1..=attempts_allowed {
        let reply = log.call(backend, Phase::Select, 0, &messages)?;
        match parse_selection(&reply, n, cfg.k_max, cfg.selection_mode) {
            Ok(sel) => {
                return Ok(SelectionOutcome {
                    indices: sel.indices,
                    mode: cfg.selection_mode,
                    fallback_selection: false,
                    lenient_scan: sel.used_fallback,
                    attempts: attempt,
                })
            }
            Err(e) => {
                log::warn!("episode {}: selection reply unusable: {e}", prep.episode.episode_id);
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user_text(
                    cfg.templates.render("select_retry", &[("error", &e.to_string())])?,
                ));
            }
        }
    }
    log::warn!("episode {}: FallbackSelection to the first {} frames", prep.episode.episode_id, cfg.k_max);
    Ok(SelectionOutcome {
        indices: (0..n.min(cfg.k_max)).collect(),
        mode: cfg.selection_mode,
        fallback_selection: true,
        lenient_scan: false,
        attempts: attempts_allowed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub action: Action,
    pub pose: CameraPose,
}

/// Everything written to `result.json`. Holds no wall-clock data, so two
/// runs with a deterministic backend serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub mode: RunMode,
    pub question: String,
    pub ground_truth: String,
    pub extra_answers: Vec<String>,
    pub category: Option<String>,
    pub answer: String,
    pub termination: Termination,
    pub step_count: usize,
    pub start_pose: Option<CameraPose>,
    pub trajectory: Vec<TrajectoryStep>,
    /// Anchors as indices into the subsampled frames.
    pub anchor_frame_indices: Vec<usize>,
    pub anchor_poses: Vec<CameraPose>,
    pub selection: Option<SelectionOutcome>,
    pub subsampled_frame_count: usize,
    pub rendered_frames: Vec<usize>,
    pub nudges: usize,
    pub discarded_answers: Vec<String>,
    pub parse_failures: usize,
    pub evicted_steps: Vec<usize>,
    pub request_count: usize,
    pub failure: Option<String>,
}

impl EpisodeResult {
    fn empty(prep: &PreparedEpisode, mode: RunMode) -> Self {
        let ep = &prep.episode;
        EpisodeResult {
            episode_id: ep.episode_id.clone(),
            mode,
            question: ep.question.clone(),
            ground_truth: ep.ground_truth.clone(),
            extra_answers: ep.extra_answers.clone(),
            category: ep.category.clone(),
            answer: String::new(),
            termination: Termination::Failed,
            step_count: 0,
            start_pose: None,
            trajectory: Vec::new(),
            anchor_frame_indices: Vec::new(),
            anchor_poses: Vec::new(),
            selection: None,
            subsampled_frame_count: prep.frames.len(),
            rendered_frames: prep.rendered_frames.clone(),
            nudges: 0,
            discarded_answers: Vec::new(),
            parse_failures: 0,
            evicted_steps: Vec::new(),
            request_count: 0,
            failure: None,
        }
    }

    /// A result for an episode that could not even be prepared.
    pub fn failed(episode: &Episode, mode: RunMode, failure: String) -> Self {
        EpisodeResult {
            episode_id: episode.episode_id.clone(),
            mode,
            question: episode.question.clone(),
            ground_truth: episode.ground_truth.clone(),
            extra_answers: episode.extra_answers.clone(),
            category: episode.category.clone(),
            answer: String::new(),
            termination: Termination::Failed,
            step_count: 0,
            start_pose: None,
            trajectory: Vec::new(),
            anchor_frame_indices: Vec::new(),
            anchor_poses: Vec::new(),
            selection: None,
            subsampled_frame_count: 0,
            rendered_frames: Vec::new(),
            nudges: 0,
            discarded_answers: Vec::new(),
            parse_failures: 0,
            evicted_steps: Vec::new(),
            request_count: 0,
            failure: Some(failure),
        }
    }

    pub fn trajectory_poses(&self) -> Vec<CameraPose> {
        self.start_pose
            .iter()
            .copied()
            .chain(self.trajectory.iter().map(|s| s.pose))
            .collect()
    }
}

/// A finished episode with everything the harness persists.
#[derive(Debug)]
pub struct EpisodeRun {
    pub result: EpisodeResult,
    pub transcript: Vec<TranscriptRecord>,
    /// Step images in order, as (step, image).
    pub step_images: Vec<(usize, ContextImage)>,
    pub birds_eye: Option<ContextImage>,
    pub wall_time_s: f64,
}

struct LoopOutcome {
    answer: String,
    termination: Termination,
    nudges: usize,
    discarded: Vec<String>,
    parse_failures: usize,
    evicted: Vec<usize>,
}

/// The answer carried by a forced reply: its `ANSWER:` text when it
/// parses as one, otherwise the whole reply trimmed.
pub fn forced_answer(reply: &str) -> String {
    match parse_step(reply, 0) {
        Ok(d) => match d.decision {
            Decision::Final(a) => a,
            Decision::Act(_) => reply.trim().to_string(),
        },
        Err(_) => reply.trim().to_string(),
    }
}

fn is_prefix(prev: &[ChatMessage], next: &[ChatMessage]) -> bool {
    prev.len() <= next.len() && prev.iter().zip(next).all(|(a, b)| a == b)
}

fn run_cov_loop(
    prep: &PreparedEpisode,
    ctx: &mut AgentContext,
    backend: &dyn ChatBackend,
    cfg: &AgentConfig,
    log: &mut Transcript,
) -> Result<LoopOutcome, AgentError> {
    let budget = cfg.budget;
    let opts = cfg.cov_options();
    let anchor_poses = ctx.anchor_poses();
    let render_k = prep.frames[ctx.anchors()[0].frame_index].intrinsics;
    let mut out = LoopOutcome {
        answer: String::new(),
        termination: Termination::Failed,
        nudges: 0,
        discarded: Vec::new(),
        parse_failures: 0,
        evicted: Vec::new(),
    };
    let mut previous: Option<Vec<ChatMessage>> = None;
    let mut failures_this_step = 0;

    let mut request = |ctx: &AgentContext, log: &mut Transcript, out: &mut LoopOutcome| -> Result<String, AgentError> {
        let rendered = render_cov_step(&cfg.templates, ctx, &opts)?;
        if rendered.evicted_steps.is_empty() {
            if let Some(prev) = &previous {
                if !is_prefix(prev, &rendered.messages) {
                    return Err(AgentError::Invariant("loop context is not append-only".into()));
                }
            }
        } else {
            for s in &rendered.evicted_steps {
                if !out.evicted.contains(s) {
                    log::info!("episode {}: evicting image of step {s}", prep.episode.episode_id);
                    out.evicted.push(*s);
                }
            }
        }
        let reply = log.call(backend, Phase::Step, ctx.step_count(), &rendered.messages)?;
        previous = Some(rendered.messages);
        Ok(reply)
    };

    loop {
        if ctx.step_count() >= budget.max_steps {
            ctx.push_answer_now(None);
            let reply = request(ctx, log, &mut out)?;
            out.answer = forced_answer(&reply);
            out.termination = Termination::StepCapForced;
            break;
        }
        let reply = request(ctx, log, &mut out)?;
        match parse_step(&reply, ctx.anchors().len()) {
            Ok(decision) => {
                failures_this_step = 0;
                match decision.decision.clone() {
                    Decision::Final(answer) => {
                        if ctx.step_count() >= budget.min_steps {
                            out.answer = answer;
                            out.termination = Termination::Answered;
                            break;
                        }
                        if out.nudges >= budget.max_nudges {
                            out.answer = answer;
                            out.termination = Termination::NudgeCapForced;
                            break;
                        }
                        out.nudges += 1;
                        out.discarded.push(answer);
                        ctx.push_nudge(reply, budget.min_steps);
                    }
                    Decision::Act(action) => {
                        let pose = apply_action(&ctx.current_pose(), &action, &cfg.motion, prep.bounds(), &anchor_poses)?;
                        let image = match action {
                            Action::SwitchTo(i) => ctx.anchors()[i].image.clone(),
                            _ => {
                                let obs = render_view(&prep.scene, &pose, &render_k, &cfg.render);
                                ContextImage::from_observation(&obs)?
                            }
                        };
                        ctx.push_step(reply, decision, action, image);
                    }
                }
            }
            Err(e) => {
                out.parse_failures += 1;
                failures_this_step += 1;
                log::warn!("episode {}: unparseable step reply: {e}", prep.episode.episode_id);
                if failures_this_step > budget.max_parse_retries {
                    ctx.push_answer_now(Some(reply));
                    let forced = request(ctx, log, &mut out)?;
                    out.answer = forced_answer(&forced);
                    out.termination = Termination::ParseForced;
                    break;
                }
                ctx.push_retry(reply, e);
            }
        }
    }

    if out.termination == Termination::Answered && ctx.step_count() < budget.min_steps {
        return Err(AgentError::Invariant("answered below the step minimum".into()));
    }
    if ctx.step_count() > budget.max_steps {
        return Err(AgentError::Invariant("step cap exceeded".into()));
    }
    Ok(out)
}

/// Runs one episode in the given mode. Backend and rendering errors end
/// the episode with [`Termination::Failed`].
pub fn run_episode(prep: &PreparedEpisode, mode: RunMode, backend: &dyn ChatBackend, cfg: &AgentConfig) -> EpisodeRun {
    let start = Instant::now();
    let mut log = Transcript::default();
    let mut result = EpisodeResult::empty(prep, mode);
    let mut step_images = Vec::new();
    let mut birds_eye = None;

    let outcome: Result<(), AgentError> = (|| {
        cfg.validate().map_err(AgentError::Config)?;
        match mode {
            RunMode::Baseline => {
                let frames: Vec<&ContextImage> = prep.frame_images.iter().collect();
                let messages = render_baseline(&cfg.templates, &prep.episode.question, &frames, cfg.backend_max_images)?;
                let reply = log.call(backend, Phase::Baseline, 0, &messages)?;
                result.answer = forced_answer(&reply);
                result.termination = Termination::Answered;
                Ok(())
            }
            RunMode::Cov | RunMode::NoSelection => {
                let indices = if mode == RunMode::Cov {
                    let sel = select_views(prep, backend, cfg, &mut log)?;
                    let idx = sel.indices.clone();
                    result.selection = Some(sel);
                    idx
                } else {
                    (0..prep.frames.len()).collect()
                };
                let anchors: Vec<AnchorView> = indices
                    .iter()
                    .map(|&i| AnchorView {
                        frame_index: i,
                        frame_id: prep.frames[i].frame_id,
                        image: prep.frame_images[i].clone(),
                    })
                    .collect();
                result.anchor_frame_indices = indices;
                result.anchor_poses = anchors.iter().map(|a| a.image.pose).collect();
                let mut ctx = AgentContext::new(prep.episode.question.clone(), anchors, prep.birds_eye.clone())?;
                result.start_pose = Some(ctx.current_pose());
                birds_eye = Some(prep.birds_eye.clone());
                let loop_result = run_cov_loop(prep, &mut ctx, backend, cfg, &mut log);
                for e in ctx.entries() {
                    if let ContextEntry::Step {
                        step, action, image, ..
                    } = e
                    {
                        result.trajectory.push(TrajectoryStep {
                            step: *step,
                            action: action.clone(),
                            pose: image.pose,
                        });
                        step_images.push((*step, image.clone()));
                    }
                }
                result.step_count = ctx.step_count();
                let out = loop_result?;
                result.answer = out.answer;
                result.termination = out.termination;
                result.nudges = out.nudges;
                result.discarded_answers = out.discarded;
                result.parse_failures = out.parse_failures;
                result.evicted_steps = out.evicted;
                Ok(())
            }
        }
    })();

    if let Err(e) = outcome {
        log::error!("episode {} failed: {e}", prep.episode.episode_id);
        result.termination = Termination::Failed;
        result.failure = Some(e.to_string());
        result.answer.clear();
    }
    result.request_count = log.records.len();
    EpisodeRun {
        result,
        transcript: log.records,
        step_images,
        birds_eye,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Single-pass QA over all subsampled frames.
pub fn run_baseline(prep: &PreparedEpisode, backend: &dyn ChatBackend, cfg: &AgentConfig) -> EpisodeRun {
    run_episode(prep, RunMode::Baseline, backend, cfg)
}

/// Selection followed by the loop.
pub fn run_cov(prep: &PreparedEpisode, backend: &dyn ChatBackend, cfg: &AgentConfig) -> EpisodeRun {
    run_episode(prep, RunMode::Cov, backend, cfg)
}

/// The loop with every subsampled frame as an anchor.
pub fn run_no_selection(prep: &PreparedEpisode, backend: &dyn ChatBackend, cfg: &AgentConfig) -> EpisodeRun {
    run_episode(prep, RunMode::NoSelection, backend, cfg)
}

/// Re-applies logged actions from `start` and returns every pose after it.
pub fn replay_trajectory(
    start: &CameraPose,
    actions: &[Action],
    motion: &MotionConfig,
    bounds: &Aabb,
    anchors: &[CameraPose],
) -> Result<Vec<CameraPose>, GeometryError> {
    let mut pose = *start;
    actions
        .iter()
        .map(|a| {
            pose = apply_action(&pose, a, motion, bounds, anchors)?;
            Ok(pose)
        })
        .collect()
}

/// Largest elementwise difference between two pose lists, or infinity
/// when their lengths differ.
pub fn max_pose_deviation(a: &[CameraPose], b: &[CameraPose]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| {
            let (p, q) = (p.to_row_major(), q.to_row_major());
            (0..16).map(move |i| (p[i] - q[i]).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;
