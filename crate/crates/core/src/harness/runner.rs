use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::export::TrajectoryFile;
use super::{BackendFactory, HarnessConfig, HarnessError};
use crate::agent::{prepare_episode, run_episode, AgentConfig, EpisodeResult, EpisodeRun, RunMode, Termination, Transcript};
use crate::gateway::{CacheEntry, ChatBackend};
use crate::metrics::{judge, JudgeVerdict, ScoreItem, ScoreReport};
use crate::prompts::{JudgeOptions, TemplateSet};
use crate::render::BirdsEyeMapping;
use crate::scene_io::{load_episode, load_point_cloud, Episode, LoadOptions, ScenePointCloud};

#[derive(Debug, Deserialize)]
struct Manifest {
    episodes: Vec<PathBuf>,
}

/// Episode files named by a manifest, resolved against its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(HarnessError::json(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(m.episodes.iter().map(|p| base.join(p)).collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(HarnessError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

fn placeholder_episode(path: &Path) -> Episode {
    Episode {
        episode_id: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        scene_path: PathBuf::new(),
        frames: Vec::new(),
        question: String::new(),
        ground_truth: String::new(),
        extra_answers: Vec::new(),
        category: None,
        base_dir: PathBuf::new(),
    }
}

#[derive(Default)]
struct SceneCache(Mutex<HashMap<PathBuf, Arc<ScenePointCloud>>>);

impl SceneCache {
    fn get(&self, path: &Path) -> Result<Arc<ScenePointCloud>, HarnessError> {
        let mut map = self.0.lock().expect("scene cache");
        if let Some(s) = map.get(path) {
            return Ok(s.clone());
        }
        let scene = Arc::new(load_point_cloud(path)?);
        map.insert(path.to_path_buf(), scene.clone());
        Ok(scene)
    }
}

fn write_artifacts(dir: &Path, run: &EpisodeRun, mapping: Option<BirdsEyeMapping>) -> Result<(), HarnessError> {
    let steps = dir.join("steps");
    std::fs::create_dir_all(&steps).map_err(HarnessError::io(&steps))?;
    let mut lines = String::new();
    for rec in &run.transcript {
        lines.push_str(&serde_json::to_string(rec).map_err(HarnessError::json(dir))?);
        lines.push('\n');
    }
    let tpath = dir.join("transcript.jsonl");
    std::fs::write(&tpath, lines).map_err(HarnessError::io(&tpath))?;
    for (t, img) in &run.step_images {
        let p = steps.join(format!("{t}.png"));
        std::fs::write(&p, img.bytes.as_slice()).map_err(HarnessError::io(&p))?;
        write_json(
            &steps.join(format!("{t}.json")),
            &serde_json::json!({ "step": t, "pose": img.pose, "provenance": img.provenance }),
        )?;
    }
    if let Some(be) = &run.birds_eye {
        let p = dir.join("birds_eye.png");
        std::fs::write(&p, be.bytes.as_slice()).map_err(HarnessError::io(&p))?;
    }
    let r = &run.result;
    if let (Some(start), Some(mapping)) = (r.start_pose, mapping) {
        write_json(
            &dir.join("trajectory.json"),
            &TrajectoryFile {
                episode_id: r.episode_id.clone(),
                mapping,
                start_pose: start,
                steps: r.trajectory.clone(),
                anchor_frame_indices: r.anchor_frame_indices.clone(),
                anchor_poses: r.anchor_poses.clone(),
            },
        )?;
    }
    write_json(&dir.join("timing.json"), &serde_json::json!({ "wall_time_s": run.wall_time_s }))
}

enum Done {
    Ran(EpisodeResult),
    Skipped(EpisodeResult),
}

fn run_one(
    path: &Path,
    run_dir: &Path,
    mode: RunMode,
    cfg: &AgentConfig,
    force: bool,
    factory: &dyn BackendFactory,
    scenes: &SceneCache,
) -> Result<Done, HarnessError> {
    let loaded = load_episode(path, LoadOptions { strict_images: false });
    let episode = match &loaded {
        Ok(e) => e.clone(),
        Err(_) => placeholder_episode(path),
    };
    let dir = run_dir.join(&episode.episode_id);
    let result_path = dir.join("result.json");
    if result_path.exists() && !force {
        return Ok(Done::Skipped(read_json(&result_path)?));
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    }
    std::fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let fail = |msg: String| {
        log::warn!("episode {} failed: {msg}", episode.episode_id);
        EpisodeResult::failed(&episode, mode, msg)
    };
    let (result, prepared) = match loaded {
        Err(e) => (fail(e.to_string()), None),
        Ok(_) => match scenes.get(&episode.resolved_scene_path()) {
            Err(e) => (fail(e.to_string()), None),
            Ok(scene) => match prepare_episode(&episode, scene, cfg) {
                Err(e) => (fail(e.to_string()), None),
                Ok(prep) => match factory.for_episode(&episode) {
                    Err(e) => (fail(e.to_string()), None),
                    Ok(backend) => {
                        let run = run_episode(&prep, mode, backend.as_ref(), cfg);
                        (run.result.clone(), Some((run, prep)))
                    }
                },
            },
        },
    };
    if let Some((run, prep)) = &prepared {
        let mapping = BirdsEyeMapping::for_bounds(prep.scene.aabb(), cfg.render.birds_eye_resolution, cfg.render.up_axis);
        write_artifacts(&dir, run, (mode != RunMode::Baseline).then_some(mapping))?;
    }
    write_json(&result_path, &result)?;
    Ok(Done::Ran(result))
}

/// One row of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode_id: String,
    pub answer: String,
    pub termination: Termination,
    pub step_count: usize,
    pub judge_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Option<RunMode>,
    pub judge: Option<String>,
    pub episode_count: usize,
    pub failed_episodes: Vec<String>,
    pub terminations: BTreeMap<String, usize>,
    /// Number of episodes per step count.
    pub step_histogram: BTreeMap<usize, usize>,
    pub mean_steps: f64,
    pub episodes: Vec<EpisodeRow>,
    pub score: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub report: RunReport,
    /// Judge requests made by this pass; cached verdicts cost none.
    pub judge_calls: usize,
}

#[derive(Serialize, Deserialize)]
struct JudgeCacheEntry {
    key: String,
    gamma: u8,
}

/// Cache key of one judgement: SHA-256 over the length-prefixed question,
/// ground truth and prediction.
pub fn judge_key(question: &str, ground_truth: &str, prediction: &str) -> String {
    let mut h = Sha256::new();
    for s in [question, ground_truth, prediction] {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    hex::encode(h.finalize())
}

fn read_results(run_dir: &Path) -> Result<Vec<EpisodeResult>, HarnessError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(HarnessError::io(run_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("result.json").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| read_json(&d.join("result.json"))).collect()
}

/// Judges every answer in a run directory and writes `report.json`.
///
/// Verdicts are cached in `judge_cache.jsonl`; judge exchanges are appended
/// to `judge_transcript.jsonl`. A backend failure on one item marks that
/// item and scores it 1.
pub fn score_run(
    run_dir: &Path,
    judge_backend: Option<&dyn ChatBackend>,
    templates: &TemplateSet,
    opts: JudgeOptions,
) -> Result<ScoreOutcome, HarnessError> {
    let results = read_results(run_dir)?;
    let cache_path = run_dir.join("judge_cache.jsonl");
    let mut cache: HashMap<String, u8> = HashMap::new();
    if let Ok(text) = std::fs::read_to_string(&cache_path) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<JudgeCacheEntry>(line) {
                Ok(e) => {
                    cache.insert(e.key, e.gamma);
                }
                Err(e) => log::warn!("{}: skipping bad cache line: {e}", cache_path.display()),
            }
        }
    }
    let mut calls = 0;
    let mut items = Vec::with_capacity(results.len());
    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        let failed = r.termination == Termination::Failed;
        let mut verdict = None;
        if let Some(backend) = judge_backend {
            verdict = Some(if failed {
                JudgeVerdict {
                    gamma: 1,
                    judge_failure: false,
                }
            } else {
                let key = judge_key(&r.question, &r.ground_truth, &r.answer);
                match cache.get(&key) {
                    Some(&gamma) => JudgeVerdict {
                        gamma,
                        judge_failure: false,
                    },
                    None => {
                        let mut log = Transcript::default();
                        let v = judge(
                            templates,
                            &r.question,
                            &r.ground_truth,
                            &r.extra_answers,
                            r.category.as_deref(),
                            &r.answer,
                            backend,
                            opts,
                            &mut log,
                        );
                        calls += log.records.len();
                        append_lines(&run_dir.join("judge_transcript.jsonl"), &log, &r.episode_id)?;
                        match v {
                            Ok(v) => {
                                if !v.judge_failure {
                                    let line = serde_json::to_string(&JudgeCacheEntry { key: key.clone(), gamma: v.gamma })
                                        .map_err(HarnessError::json(&cache_path))?;
                                    append(&cache_path, &line)?;
                                    cache.insert(key, v.gamma);
                                }
                                v
                            }
                            Err(e) => {
                                log::warn!("judging {} failed: {e}", r.episode_id);
                                JudgeVerdict {
                                    gamma: 1,
                                    judge_failure: true,
                                }
                            }
                        }
                    }
                }
            });
        }
        items.push(ScoreItem {
            episode_id: r.episode_id.clone(),
            prediction: r.answer.clone(),
            ground_truth: r.ground_truth.clone(),
            extras: r.extra_answers.clone(),
            gamma: verdict.map(|v| v.gamma),
            judge_failure: verdict.is_some_and(|v| v.judge_failure),
            episode_failed: failed,
        });
        rows.push(EpisodeRow {
            episode_id: r.episode_id.clone(),
            answer: r.answer.clone(),
            termination: r.termination,
            step_count: r.step_count,
            judge_failure: verdict.is_some_and(|v| v.judge_failure),
        });
    }
    let mut terminations = BTreeMap::new();
    let mut step_histogram = BTreeMap::new();
    for r in &results {
        let name = serde_json::to_value(r.termination)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *terminations.entry(name).or_insert(0) += 1;
        *step_histogram.entry(r.step_count).or_insert(0) += 1;
    }
    let report = RunReport {
        mode: results.first().map(|r| r.mode),
        judge: judge_backend.map(|b| b.describe()),
        episode_count: results.len(),
        failed_episodes: results
            .iter()
            .filter(|r| r.termination == Termination::Failed)
            .map(|r| r.episode_id.clone())
            .collect(),
        terminations,
        step_histogram,
        mean_steps: if results.is_empty() {
            0.0
        } else {
            results.iter().map(|r| r.step_count as f64).sum::<f64>() / results.len() as f64
        },
        episodes: rows,
        score: ScoreReport::compute(&items),
    };
    write_json(&run_dir.join("report.json"), &report)?;
    Ok(ScoreOutcome {
        report,
        judge_calls: calls,
    })
}

fn append(path: &Path, line: &str) -> Result<(), HarnessError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(HarnessError::io(path))?;
    f.write_all(format!("{line}\n").as_bytes()).map_err(HarnessError::io(path))
}

fn append_lines(path: &Path, log: &Transcript, episode_id: &str) -> Result<(), HarnessError> {
    for rec in &log.records {
        let mut v = serde_json::to_value(rec).map_err(HarnessError::json(path))?;
        v["episode_id"] = episode_id.into();
        append(path, &v.to_string())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub report: RunReport,
    pub judge_calls: usize,
}

impl RunOutcome {
    pub fn failed(&self) -> &[String] {
        &self.report.failed_episodes
    }
}

/// Runs every manifest episode under the config's mode into `run_dir()`.
pub fn run(cfg: &HarnessConfig) -> Result<RunOutcome, HarnessError> {
    let factory = cfg.backend_factory()?;
    let judge = cfg.judge.backend()?;
    run_with(cfg, &cfg.run_dir(), &factory, judge.as_deref())
}

/// [`run`] with an explicit directory, backend factory and judge.
pub fn run_with(
    cfg: &HarnessConfig,
    run_dir: &Path,
    factory: &dyn BackendFactory,
    judge_backend: Option<&dyn ChatBackend>,
) -> Result<RunOutcome, HarnessError> {
    let agent_cfg = cfg.agent_config()?;
    let episodes = load_manifest(&cfg.resolve(&cfg.run.manifest))?;
    std::fs::create_dir_all(run_dir).map_err(HarnessError::io(run_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let scenes = SceneCache::default();
    let done: Vec<Result<Done, HarnessError>> = pool.install(|| {
        episodes
            .par_iter()
            .map(|p| run_one(p, run_dir, cfg.run.mode, &agent_cfg, cfg.run.force, factory, &scenes))
            .collect()
    });
    let (mut executed, mut skipped) = (Vec::new(), Vec::new());
    for d in done {
        match d? {
            Done::Ran(r) => executed.push(r.episode_id),
            Done::Skipped(r) => skipped.push(r.episode_id),
        }
    }
    let scored = score_run(run_dir, judge_backend, &agent_cfg.templates, cfg.judge.options())?;
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        executed,
        skipped,
        report: scored.report,
        judge_calls: scored.judge_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub min_steps: usize,
    pub run_dir: PathBuf,
    pub n: usize,
    pub failed: usize,
    pub llm_match_pct: Option<f64>,
    pub em_pct: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub mean_steps: f64,
    pub step_histogram: BTreeMap<usize, usize>,
    /// Answered episodes with fewer steps than the minimum; always zero
    /// when budget forcing works.
    pub budget_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Step settings as rows, metrics as columns.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>4} {:>10} {:>8} {:>8} {:>8} {:>8} {:>6}\n",
            "min_steps", "N", "LLM-Match", "EM@1", "BLEU-4", "ROUGE-L", "CIDEr", "steps"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>4} {:>10} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>6.2}\n",
                r.min_steps,
                r.n,
                r.llm_match_pct.map_or("-".into(), |v| format!("{v:.2}")),
                r.em_pct,
                r.bleu4 * 100.0,
                r.rouge_l * 100.0,
                r.cider * 100.0,
                r.mean_steps
            ));
        }
        out
    }
}

/// Runs cov mode once per minimum step count into
/// `<runs_dir>/<run_id or "sweep">/min_steps_<n>` and writes `sweep.json`.
pub fn sweep(cfg: &HarnessConfig, min_steps: &[usize]) -> Result<SweepReport, HarnessError> {
    let factory = cfg.backend_factory()?;
    let judge = cfg.judge.backend()?;
    let base = cfg.resolve(&cfg.run.runs_dir).join(cfg.run.run_id.as_deref().unwrap_or("sweep"));
    sweep_with(cfg, &base, min_steps, &factory, judge.as_deref())
}

pub fn sweep_with(
    cfg: &HarnessConfig,
    sweep_dir: &Path,
    min_steps: &[usize],
    factory: &dyn BackendFactory,
    judge_backend: Option<&dyn ChatBackend>,
) -> Result<SweepReport, HarnessError> {
    if min_steps.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one min_steps value".into()));
    }
    let mut rows = Vec::new();
    for &n in min_steps {
        let mut c = cfg.clone();
        c.run.mode = RunMode::Cov;
        c.budget.min_steps = n;
        let dir = sweep_dir.join(format!("min_steps_{n}"));
        let out = run_with(&c, &dir, factory, judge_backend)?;
        let rep = &out.report;
        let a = &rep.score.aggregate;
        rows.push(SweepRow {
            min_steps: n,
            run_dir: dir,
            n: rep.episode_count,
            failed: rep.failed_episodes.len(),
            llm_match_pct: a.llm_match_pct,
            em_pct: a.em_pct,
            bleu4: a.bleu4,
            rouge_l: a.rouge_l,
            cider: a.cider,
            mean_steps: rep.mean_steps,
            step_histogram: rep.step_histogram.clone(),
            budget_violations: rep
                .episodes
                .iter()
                .filter(|e| e.termination == Termination::Answered && e.step_count < n)
                .count(),
        });
    }
    let report = SweepReport { rows };
    write_json(&sweep_dir.join("sweep.json"), &report)?;
    Ok(report)
}

/// Turns the transcripts of a run into a replay session file, so the run
/// can be reproduced with `backend.kind = "replay"`.
pub fn export_session(run_dir: &Path, out: &Path) -> Result<usize, HarnessError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(HarnessError::io(run_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("transcript.jsonl").is_file())
        .collect();
    dirs.sort();
    let mut lines = String::new();
    let mut n = 0;
    for d in dirs {
        let path = d.join("transcript.jsonl");
        let text = std::fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: crate::agent::TranscriptRecord = serde_json::from_str(line).map_err(HarnessError::json(&path))?;
            if let Some(response) = rec.response {
                let e = CacheEntry {
                    hash: rec.request_hash,
                    response,
                    timestamp: 0,
                };
                lines.push_str(&serde_json::to_string(&e).map_err(HarnessError::json(out))?);
                lines.push('\n');
                n += 1;
            }
        }
    }
    std::fs::write(out, lines).map_err(HarnessError::io(out))?;
    Ok(n)
}
