use std::path::{Path, PathBuf};

use cov_core::agent::{Phase, RunMode, Termination, TranscriptRecord};
use cov_core::fixtures::{self, write_suite, SuitePaths};
use cov_core::gateway::{ChatBackend, FnBackend, GatewayError, ScriptedBackend};
use cov_core::harness::{
    self, export_session, export_trajectory, load_trajectory, render_to_file, score_run, BackendKind, HarnessConfig,
    HarnessError, JudgeKind, TrajFormat, ViewSpec,
};
use cov_core::metrics::RuleJudge;
use cov_core::prompts::{JudgeOptions, TemplateSet};
use cov_core::render::RenderSettings;
use cov_core::scene_io::{save_ply, Episode, ScenePointCloud};

fn suite() -> (tempfile::TempDir, SuitePaths, HarnessConfig) {
    let dir = tempfile::tempdir().unwrap();
    let suite = write_suite(dir.path()).unwrap();
    let cfg = HarnessConfig::load(&suite.config).unwrap();
    (dir, suite, cfg)
}

fn transcripts(run_dir: &Path) -> Vec<TranscriptRecord> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(run_dir).unwrap() {
        let p = e.unwrap().path().join("transcript.jsonl");
        if let Ok(text) = std::fs::read_to_string(p) {
            out.extend(text.lines().map(|l| serde_json::from_str::<TranscriptRecord>(l).unwrap()));
        }
    }
    out
}

fn result_bytes(run_dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(run_dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            let r = p.join("result.json");
            r.is_file()
                .then(|| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(r).unwrap()))
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_results_and_resumes() {
    let (_d, _s, cfg) = suite();
    let first = harness::run(&cfg).unwrap();
    assert_eq!(first.executed.len(), 3);
    assert!(first.failed().is_empty());
    let dir = cfg.run_dir();
    assert_eq!(result_bytes(&dir).len(), 3);
    assert!(dir.join("report.json").is_file());
    let second = harness::run(&cfg).unwrap();
    assert!(second.executed.is_empty());
    assert_eq!(second.skipped.len(), 3);
    assert_eq!(second.judge_calls, 0);
    for r in &first.report.episodes {
        assert_eq!(r.termination, Termination::Answered);
        assert!(r.step_count >= cfg.budget.min_steps);
    }
}

#[test]
fn interrupted_run_gives_identical_report() {
    let (_d, _s, cfg) = suite();
    harness::run(&cfg).unwrap();
    let whole = std::fs::read(cfg.run_dir().join("report.json")).unwrap();

    let (_d2, _s2, cfg2) = suite();
    harness::run(&cfg2).unwrap();
    let dir = cfg2.run_dir();
    // Simulate a crash: one episode unfinished, no report, no judge cache.
    std::fs::remove_file(dir.join("corridor_001/result.json")).unwrap();
    std::fs::remove_file(dir.join("report.json")).unwrap();
    std::fs::remove_file(dir.join("judge_cache.jsonl")).unwrap();
    let resumed = harness::run(&cfg2).unwrap();
    assert_eq!(resumed.executed, ["corridor_001"]);
    assert_eq!(std::fs::read(dir.join("report.json")).unwrap(), whole);
}

#[test]
fn force_reruns_everything() {
    let (_d, _s, mut cfg) = suite();
    harness::run(&cfg).unwrap();
    cfg.run.force = true;
    let again = harness::run(&cfg).unwrap();
    assert_eq!(again.executed.len(), 3);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let (_d, _s, mut cfg) = suite();
    cfg.run.workers = 1;
    harness::run(&cfg).unwrap();
    let (_d2, _s2, mut cfg2) = suite();
    cfg2.run.workers = 3;
    harness::run(&cfg2).unwrap();
    assert_eq!(result_bytes(&cfg.run_dir()), result_bytes(&cfg2.run_dir()));
    assert_eq!(
        std::fs::read(cfg.run_dir().join("report.json")).unwrap(),
        std::fs::read(cfg2.run_dir().join("report.json")).unwrap()
    );
}

#[test]
fn no_selection_run_has_no_selection_requests() {
    let (_d, _s, mut cfg) = suite();
    cfg.run.mode = RunMode::NoSelection;
    let out = harness::run(&cfg).unwrap();
    assert!(out.failed().is_empty());
    let recs = transcripts(&cfg.run_dir());
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r.phase != Phase::Select));
}

#[test]
fn baseline_llm_match_matches_hand_scores() {
    let (_d, _s, mut cfg) = suite();
    cfg.run.mode = RunMode::Baseline;
    // Hand scores under the rule judge: "red cube" is a listed extra (5),
    // "crate" is wrong (1), "Green box." normalizes to the answer (5).
    let reply = |id: &str| match id {
        "cube_room_001" => "red cube",
        "corridor_001" => "crate",
        _ => "Green box.",
    };
    let factory = move |ep: &Episode| -> Result<Box<dyn ChatBackend>, HarnessError> {
        Ok(Box::new(ScriptedBackend::from_replies([reply(&ep.episode_id)])))
    };
    let out = harness::run_with(&cfg, &cfg.run_dir(), &factory, Some(&RuleJudge)).unwrap();
    let expected = (1.0 + 0.0 + 1.0) / 3.0 * 100.0;
    assert!((out.report.score.aggregate.llm_match_pct.unwrap() - expected).abs() < 1e-9);
    assert!((out.report.score.aggregate.em_pct - expected).abs() < 1e-9);
    assert!(out.report.score.is_consistent());
}

#[test]
fn scoring_uses_the_judge_cache() {
    let (_d, _s, cfg) = suite();
    let out = harness::run(&cfg).unwrap();
    assert_eq!(out.judge_calls, 3);
    let dir = cfg.run_dir();
    let templates = TemplateSet::builtin();
    let again = score_run(&dir, Some(&RuleJudge), &templates, JudgeOptions::default()).unwrap();
    assert_eq!(again.judge_calls, 0);
    assert_eq!(again.report, out.report);

    let cache = dir.join("judge_cache.jsonl");
    let text = std::fs::read_to_string(&cache).unwrap();
    let kept: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&cache, kept.join("\n") + "\n").unwrap();
    let third = score_run(&dir, Some(&RuleJudge), &templates, JudgeOptions::default()).unwrap();
    assert_eq!(third.judge_calls, 1);
}

#[test]
fn judge_backend_failure_is_flagged_per_item() {
    let (_d, _s, cfg) = suite();
    harness::run(&cfg).unwrap();
    let judge = FnBackend::new("flaky", |msgs| {
        if cov_core::gateway::latest_user_text(msgs).contains("divider") {
            Err(GatewayError::TransportFailure("down".into()))
        } else {
            RuleJudge.complete(msgs)
        }
    });
    let dir = cfg.run_dir();
    std::fs::remove_file(dir.join("judge_cache.jsonl")).unwrap();
    let out = score_run(&dir, Some(&judge), &TemplateSet::builtin(), JudgeOptions::default()).unwrap();
    let flagged: Vec<&str> = out
        .report
        .episodes
        .iter()
        .filter(|e| e.judge_failure)
        .map(|e| e.episode_id.as_str())
        .collect();
    assert_eq!(flagged, ["occluded_room_001"]);
    assert!((out.report.score.aggregate.llm_match_pct.unwrap() - 200.0 / 3.0).abs() < 1e-9);
}

#[test]
fn missing_scene_fails_one_episode_only() {
    let (_d, s, cfg) = suite();
    std::fs::remove_file(s.root.join("scenes/corridor.ply")).unwrap();
    let out = harness::run(&cfg).unwrap();
    assert_eq!(out.failed(), ["corridor_001"]);
    assert_eq!(out.report.episode_count, 3);
    let row = out.report.score.per_question.iter().find(|q| q.episode_id == "corridor_001").unwrap();
    assert!(row.episode_failed);
    assert_eq!(row.gamma, Some(1));
}

#[test]
fn sweep_writes_one_run_per_setting() {
    let (_d, s, cfg) = suite();
    let report = harness::sweep(&cfg, &[1, 3]).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert!(row.run_dir.join("report.json").is_file());
        assert_eq!(row.step_histogram.values().sum::<usize>(), 3);
        assert_eq!(row.budget_violations, 0);
    }
    let sweep_json = s.root.join("runs/sweep/sweep.json");
    let parsed: harness::SweepReport = serde_json::from_str(&std::fs::read_to_string(sweep_json).unwrap()).unwrap();
    assert_eq!(parsed, report);
    assert_eq!(report.table().lines().count(), 3);
}

#[test]
fn oracle_sweep_accuracy_is_monotone() {
    let (_d, _s, mut cfg) = suite();
    cfg.backend.kind = BackendKind::Oracle;
    cfg.backend.oracle_k = 3;
    let report = harness::sweep(&cfg, &[0, 1, 2, 3, 4]).unwrap();
    let ems: Vec<f64> = report.rows.iter().map(|r| r.em_pct).collect();
    assert_eq!(ems, [0.0, 0.0, 0.0, 100.0, 100.0]);
    assert!(ems.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn transcripts_alone_reproduce_the_run() {
    let (_d, s, cfg) = suite();
    harness::run(&cfg).unwrap();
    let session = s.root.join("session.jsonl");
    assert!(export_session(&cfg.run_dir(), &session).unwrap() > 0);
    let mut replay = cfg.clone();
    replay.backend.kind = BackendKind::Replay;
    replay.backend.replay = Some(session);
    replay.run.run_id = Some("replayed".into());
    harness::run(&replay).unwrap();
    assert_eq!(result_bytes(&cfg.run_dir()), result_bytes(&replay.run_dir()));
    for ep in ["cube_room_001", "corridor_001", "occluded_room_001"] {
        for f in ["trajectory.json", "birds_eye.png", "steps/3.png"] {
            assert_eq!(
                std::fs::read(cfg.run_dir().join(ep).join(f)).unwrap(),
                std::fs::read(replay.run_dir().join(ep).join(f)).unwrap(),
                "{ep}/{f}"
            );
        }
    }
}

/// Pixel position of a world point, derived from the scene's points: the
/// longer planar side plus 5% per side spans the image, centered.
fn overview_pixel(points: &[[f32; 3]], size: u32, p: [f64; 3]) -> (f64, f64) {
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for q in points {
        for i in 0..2 {
            lo[i] = lo[i].min(f64::from(q[i]));
            hi[i] = hi[i].max(f64::from(q[i]));
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]) * 1.1;
    let s = f64::from(size) / span;
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let half = f64::from(size) / 2.0;
    ((p[0] - c[0]) * s + half, half - (p[1] - c[1]) * s)
}

fn polylines(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.contains(&format!("class=\"{class}\"")))
        .map(|l| {
            let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            pts.split(' ')
                .map(|xy| {
                    let (x, y) = xy.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn svg_frusta_sit_on_camera_centers() {
    let (_d, _s, cfg) = suite();
    harness::run(&cfg).unwrap();
    let dir = cfg.run_dir();
    let scene = fixtures::cube_room();
    let traj = load_trajectory(&dir, "cube_room_001").unwrap();
    assert_eq!(traj.steps.len(), 3);
    let svg = export_trajectory(&dir, "cube_room_001", TrajFormat::Svg).unwrap();
    assert!(svg.contains("data:image/png;base64,"));
    let mut frusta = polylines(&svg, "start");
    frusta.extend(polylines(&svg, "step"));
    assert_eq!(frusta.len(), 4);
    for (f, pose) in frusta.iter().zip(traj.poses()) {
        let (x, y) = overview_pixel(scene.points(), traj.mapping.size, pose.center());
        assert!((f[0].0 - x).abs() <= 1.0 && (f[0].1 - y).abs() <= 1.0);
        assert_eq!(f.first(), f.last());
    }
    assert_eq!(polylines(&svg, "anchor").len(), traj.anchor_poses.len());

    let json = export_trajectory(&dir, "cube_room_001", TrajFormat::Json).unwrap();
    let back: harness::TrajectoryFile = serde_json::from_str(&json).unwrap();
    assert_eq!(back, traj);
}

#[test]
fn zero_step_trajectory_draws_anchors_only() {
    let (_d, _s, mut cfg) = suite();
    cfg.backend.kind = BackendKind::Oracle;
    cfg.budget.min_steps = 0;
    harness::run(&cfg).unwrap();
    let svg = export_trajectory(&cfg.run_dir(), "corridor_001", TrajFormat::Svg).unwrap();
    assert!(!polylines(&svg, "anchor").is_empty());
    assert!(polylines(&svg, "start").is_empty() && polylines(&svg, "step").is_empty());
}

#[test]
fn baseline_has_no_trajectory() {
    let (_d, _s, mut cfg) = suite();
    cfg.run.mode = RunMode::Baseline;
    cfg.judge.kind = JudgeKind::None;
    let out = harness::run(&cfg).unwrap();
    assert!(out.report.score.aggregate.llm_match_pct.is_none());
    let err = export_trajectory(&cfg.run_dir(), "cube_room_001", TrajFormat::Json).unwrap_err();
    assert!(matches!(err, HarnessError::MissingTrajectory { .. }));
}

#[test]
fn identity_view_of_empty_scene_is_background() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("empty.ply");
    save_ply(&ScenePointCloud::empty(), &ply).unwrap();
    let out: PathBuf = dir.path().join("bg.png");
    let settings = RenderSettings {
        background: [0.2, 0.4, 0.6],
        ..Default::default()
    };
    let k = cov_core::harness::parse_intrinsics_spec("20,20,8,6,16,12").unwrap();
    render_to_file(&ply, ViewSpec::Pose(cov_core::geometry::CameraPose::identity(), k), &settings, &out).unwrap();
    let img = image::open(&out).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (16, 12));
    let bg = [0.2f32, 0.4, 0.6].map(|c| (c * 255.0).round() as u8);
    assert!(img.pixels().all(|p| p.0 == bg));
}
