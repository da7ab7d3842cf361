use std::sync::Arc;

use super::*;
use crate::fixtures;
use crate::gateway::{HiddenObjectOracle, ScriptedBackend};

fn prepared(frames: usize) -> PreparedEpisode {
    let f = &fixtures::all()[0];
    let mut ep = f.episode(std::path::Path::new("unused.ply"));
    ep.frames.truncate(frames);
    ep.base_dir = std::path::PathBuf::from("/nonexistent");
    let cfg = AgentConfig {
        subsample_ratio: 1,
        ..Default::default()
    };
    prepare_episode(&ep, Arc::new(fixtures::cube_room()), &cfg).unwrap()
}

fn cfg(min: usize, max: usize) -> AgentConfig {
    AgentConfig {
        budget: LoopBudget {
            min_steps: min,
            max_steps: max,
            ..Default::default()
        },
        subsample_ratio: 1,
        ..Default::default()
    }
}

#[test]
fn missing_photos_are_rendered() {
    let prep = prepared(4);
    assert_eq!(prep.rendered_frames, [0, 1, 2, 3]);
    assert_eq!(prep.frame_images.len(), 4);
}

#[test]
fn selection_picks_scripted_anchors() {
    let prep = prepared(12);
    let backend = ScriptedBackend::from_replies(["SELECT: 2, 5"]);
    let mut log = Transcript::default();
    let sel = select_views(&prep, &backend, &cfg(0, 12), &mut log).unwrap();
    assert_eq!(sel.indices, [2, 5]);
    assert!(!sel.fallback_selection);
    assert_eq!(log.records.len(), 1);
}

#[test]
fn selection_falls_back_after_retry() {
    let prep = prepared(12);
    let backend = ScriptedBackend::from_replies(["no idea", "still none"]);
    let mut log = Transcript::default();
    let mut c = cfg(0, 12);
    c.selection_mode = SelectionMode::Strict;
    let sel = select_views(&prep, &backend, &c, &mut log).unwrap();
    assert!(sel.fallback_selection);
    assert_eq!(sel.indices, (0..6).collect::<Vec<_>>());
    assert_eq!(log.records.len(), 2);
}

#[test]
fn scripted_loop_matches_pose_oracle() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies([
        "SELECT: 1",
        "ACTION: move forward",
        "ACTION: yaw left",
        "ANSWER: a red chair",
    ]);
    let c = cfg(0, 12);
    let run = run_cov(&prep, &backend, &c);
    let r = &run.result;
    assert_eq!(r.termination, Termination::Answered);
    assert_eq!(r.answer, "a red chair");
    assert_eq!(r.step_count, 2);

    // Independent oracle: forward is +z in the camera frame, yaw left is a
    // rotation by -30 degrees about the camera y axis.
    let start = prep.frames[1].pose;
    assert_eq!(r.start_pose, Some(start));
    let m = start.to_row_major();
    let rot = nalgebra::Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let t = nalgebra::Vector3::new(m[3], m[7], m[11]);
    let t1 = t + rot * nalgebra::Vector3::new(0.0, 0.0, 0.3);
    let a = (-30f64).to_radians();
    let ry = nalgebra::Matrix3::new(a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos());
    let r2 = rot * ry;
    let p1 = r.trajectory[0].pose.to_row_major();
    let p2 = r.trajectory[1].pose.to_row_major();
    for i in 0..3 {
        assert!((p1[4 * i + 3] - t1[i]).abs() < 1e-9);
        assert!((p2[4 * i + 3] - t1[i]).abs() < 1e-9);
        for j in 0..3 {
            assert!((p2[4 * i + j] - r2[(i, j)]).abs() < 1e-9);
        }
    }
}

#[test]
fn immediate_answer_with_no_minimum() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies(["SELECT: 0", "ANSWER: chair"]);
    let run = run_cov(&prep, &backend, &cfg(0, 12));
    assert_eq!(run.result.step_count, 0);
    assert_eq!(run.result.termination, Termination::Answered);
}

#[test]
fn early_answer_is_nudged_once() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies([
        "SELECT: 0",
        "ANSWER: too soon",
        "ACTION: move forward",
        "ACTION: move forward",
        "ACTION: yaw right",
        "ANSWER: chair",
    ]);
    let run = run_cov(&prep, &backend, &cfg(3, 12));
    let r = &run.result;
    assert_eq!(r.termination, Termination::Answered);
    assert_eq!(r.step_count, 3);
    assert_eq!(r.nudges, 1);
    assert_eq!(r.discarded_answers, ["too soon"]);
    let nudge_turns = run
        .transcript
        .last()
        .unwrap()
        .messages
        .iter()
        .filter(|m| {
            m.parts
                .iter()
                .any(|p| matches!(p, LoggedPart::Text { text } if text.starts_with("You answered too early")))
        })
        .count();
    assert_eq!(nudge_turns, 1);
}

#[test]
fn step_cap_forces_answer() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies(["SELECT: 0", "ACTION: move forward", "ACTION: move forward", "ANSWER: wall"]);
    let run = run_cov(&prep, &backend, &cfg(0, 2));
    assert_eq!(run.result.termination, Termination::StepCapForced);
    assert_eq!(run.result.step_count, 2);
    assert_eq!(run.result.answer, "wall");
}

#[test]
fn repeated_garbage_forces_answer() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies(["SELECT: 0", "hmm", "still thinking", "ANSWER: lamp"]);
    let run = run_cov(&prep, &backend, &cfg(0, 5));
    assert_eq!(run.result.termination, Termination::ParseForced);
    assert_eq!(run.result.parse_failures, 2);
    assert_eq!(run.result.answer, "lamp");
}

#[test]
fn switch_reuses_anchor_view() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies(["SELECT: 0, 3", "ACTION: move left", "ACTION: switch to view 1", "ANSWER: x"]);
    let run = run_cov(&prep, &backend, &cfg(0, 5));
    assert_eq!(run.result.trajectory[1].pose, prep.frames[3].pose);
    assert_eq!(run.step_images[1].1.bytes, prep.frame_images[3].bytes);
}

#[test]
fn backend_failure_marks_episode_failed() {
    let prep = prepared(4);
    let backend = ScriptedBackend::from_replies(["SELECT: 0"]);
    let run = run_cov(&prep, &backend, &cfg(0, 5));
    assert_eq!(run.result.termination, Termination::Failed);
    assert!(run.result.failure.as_deref().unwrap().contains("exhausted"));
    assert_eq!(run.result.request_count, 2);
}

#[test]
fn baseline_is_one_request_with_all_frames() {
    let prep = prepared(12);
    let backend = ScriptedBackend::from_replies(["chair"]);
    let run = run_baseline(&prep, &backend, &cfg(0, 5));
    assert_eq!(run.result.answer, "chair");
    assert_eq!(run.result.step_count, 0);
    assert!(run.result.trajectory.is_empty());
    let reqs = backend.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(crate::gateway::total_images(&reqs[0]), 12);
}

#[test]
fn no_selection_uses_every_frame_and_matches_cov_loop() {
    let prep = prepared(4);
    let loop_script = ["ACTION: move forward", "ANSWER: red"];
    let a = ScriptedBackend::from_replies(loop_script);
    let ns = run_no_selection(&prep, &a, &cfg(0, 5));
    assert_eq!(ns.result.anchor_frame_indices, [0, 1, 2, 3]);
    assert!(ns.result.selection.is_none());
    assert!(ns.transcript.iter().all(|t| t.phase != Phase::Select));

    let b = ScriptedBackend::from_replies(["SELECT: 0, 1, 2, 3", loop_script[0], loop_script[1]]);
    let cov = run_cov(&prep, &b, &cfg(0, 5));
    let steps = |run: &EpisodeRun| -> Vec<TranscriptRecord> {
        run.transcript
            .iter()
            .filter(|t| t.phase == Phase::Step)
            .cloned()
            .map(|mut t| {
                t.seq = 0;
                t
            })
            .collect()
    };
    assert_eq!(steps(&ns), steps(&cov));
    assert_eq!(ns.result.trajectory, cov.result.trajectory);
}

#[test]
fn runs_are_deterministic_and_replayable() {
    let prep = prepared(4);
    let script = ["SELECT: 2, 0", "ACTION: move forward", "ACTION: pitch up", "ACTION: switch to view 1", "ACTION: roll clockwise", "ANSWER: red"];
    let r1 = run_cov(&prep, &ScriptedBackend::from_replies(script), &cfg(3, 8));
    let r2 = run_cov(&prep, &ScriptedBackend::from_replies(script), &cfg(3, 8));
    assert_eq!(r1.result, r2.result);
    assert_eq!(r1.transcript, r2.transcript);
    let r = &r1.result;
    let actions: Vec<Action> = r.trajectory.iter().map(|s| s.action.clone()).collect();
    let replayed = replay_trajectory(&r.start_pose.unwrap(), &actions, &MotionConfig::default(), prep.bounds(), &r.anchor_poses).unwrap();
    let logged: Vec<CameraPose> = r.trajectory.iter().map(|s| s.pose).collect();
    assert!(max_pose_deviation(&replayed, &logged) <= 1e-9);
}

#[test]
fn hidden_object_oracle_needs_k_steps() {
    let prep = prepared(4);
    for min in 0..5 {
        let oracle = HiddenObjectOracle::new(3, "red");
        let run = run_cov(&prep, &oracle, &cfg(min, 12));
        let expect = if min >= 3 { "red" } else { "I cannot see it" };
        assert_eq!(run.result.answer, expect, "min_steps {min}");
        assert_eq!(run.result.step_count, min);
    }
}

#[test]
fn budget_validation() {
    assert!(LoopBudget {
        min_steps: 5,
        max_steps: 4,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(LoopBudget {
        min_steps: 0,
        max_steps: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    let prep = prepared(2);
    let run = run_cov(&prep, &ScriptedBackend::from_replies(["SELECT: 0"]), &cfg(3, 2));
    assert_eq!(run.result.termination, Termination::Failed);
}
