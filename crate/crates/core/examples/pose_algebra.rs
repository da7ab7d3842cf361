//! Walks a camera through a few discrete actions and shows that each
//! motion undoes its inverse and that twelve turns make a full circle.

use cov_core::geometry::{apply_action, Action, CameraPose, MotionConfig};
use cov_core::scene_io::Aabb;

fn main() {
    let cfg = MotionConfig::default();
    let room = Aabb {
        min: [0.0, 0.0, 0.0],
        max: [4.0, 4.0, 2.5],
    };
    let start = CameraPose::look_at([1.0, 1.0, 1.5], [3.0, 3.0, 1.0], [0.0, 0.0, 1.0]);
    let mut pose = start;
    for a in [Action::MoveForward, Action::YawLeft, Action::PitchDown, Action::MoveRight] {
        pose = apply_action(&pose, &a, &cfg, &room, &[]).unwrap();
        let c = pose.center();
        println!("{:<16} center ({:.3}, {:.3}, {:.3})", a.verb(), c[0], c[1], c[2]);
    }

    let mut p = start;
    for a in Action::MOTIONS {
        let there = apply_action(&p, &a, &cfg, &room, &[]).unwrap();
        p = apply_action(&there, &a.inverse().unwrap(), &cfg, &room, &[]).unwrap();
    }
    println!("after every motion and its inverse: {:.2e} from start", diff(&p, &start));

    let mut turned = start;
    for _ in 0..12 {
        turned = apply_action(&turned, &Action::YawRight, &cfg, &room, &[]).unwrap();
    }
    println!("after twelve yaw-right turns:      {:.2e} from start", diff(&turned, &start));

    // Walking into a wall stops at the clamp margin.
    let mut w = start;
    for _ in 0..40 {
        w = apply_action(&w, &Action::MoveForward, &cfg, &room, &[]).unwrap();
    }
    let c = w.center();
    println!("forty steps forward end at ({:.2}, {:.2}, {:.2})", c[0], c[1], c[2]);
}

fn diff(a: &CameraPose, b: &CameraPose) -> f64 {
    a.to_row_major()
        .iter()
        .zip(b.to_row_major())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
