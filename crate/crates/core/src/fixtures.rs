//! Synthetic scenes and episodes for offline runs.
//!
//! Three hand-built rooms: a colored cube room, two rooms joined by a
//! corridor, and a room whose target hides behind a divider wall. Each
//! comes with one episode, a scripted transcript and a ground truth.
//! [`write_suite`] lays everything out on disk the way the harness expects.

use std::path::{Path, PathBuf};

use crate::geometry::{CameraPose, Intrinsics};
use crate::render::{encode_image, render_view, ImageFormat, RenderSettings};
use crate::scene_io::{save_ply, Episode, FrameRecord, ScenePointCloud};

const SPACING: f64 = 0.05;
pub const FRAMES_PER_EPISODE: usize = 40;

pub fn fixture_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 40.0,
        fy: 40.0,
        cx: 32.0,
        cy: 24.0,
        width: 64,
        height: 48,
    }
}

#[derive(Default)]
struct Builder {
    points: Vec<[f32; 3]>,
    colors: Vec<[f32; 3]>,
}

impl Builder {
    /// Samples the parallelogram `origin + s*u + t*v`, s and t in [0, 1].
    fn patch(&mut self, origin: [f64; 3], u: [f64; 3], v: [f64; 3], color: [f32; 3]) {
        let len = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let nu = (len(u) / SPACING).round().max(1.0) as usize;
        let nv = (len(v) / SPACING).round().max(1.0) as usize;
        for i in 0..=nu {
            for j in 0..=nv {
                let (s, t) = (i as f64 / nu as f64, j as f64 / nv as f64);
                let p = [0, 1, 2].map(|k| (origin[k] + s * u[k] + t * v[k]) as f32);
                self.points.push(p);
                self.colors.push(color);
            }
        }
    }

    /// Vertical wall from (x0, y0) to (x1, y1), floor to `height`.
    fn wall(&mut self, a: [f64; 2], b: [f64; 2], height: f64, color: [f32; 3]) {
        self.patch([a[0], a[1], 0.0], [b[0] - a[0], b[1] - a[1], 0.0], [0.0, 0.0, height], color);
    }

    fn floor(&mut self, min: [f64; 2], max: [f64; 2], color: [f32; 3]) {
        self.patch([min[0], min[1], 0.0], [max[0] - min[0], 0.0, 0.0], [0.0, max[1] - min[1], 0.0], color);
    }

    /// Axis-aligned box on the floor, five faces.
    fn block(&mut self, min: [f64; 3], max: [f64; 3], color: [f32; 3]) {
        let d = [max[0] - min[0], max[1] - min[1], max[2] - min[2]];
        self.patch([min[0], min[1], max[2]], [d[0], 0.0, 0.0], [0.0, d[1], 0.0], color);
        self.patch(min, [d[0], 0.0, 0.0], [0.0, 0.0, d[2]], color);
        self.patch([min[0], max[1], min[2]], [d[0], 0.0, 0.0], [0.0, 0.0, d[2]], color);
        self.patch(min, [0.0, d[1], 0.0], [0.0, 0.0, d[2]], color);
        self.patch([max[0], min[1], min[2]], [0.0, d[1], 0.0], [0.0, 0.0, d[2]], color);
    }

    fn build(self) -> ScenePointCloud {
        ScenePointCloud::new(self.points, self.colors).expect("fixture geometry is finite")
    }
}

const FLOOR: [f32; 3] = [0.55, 0.55, 0.55];
const WALL_A: [f32; 3] = [0.80, 0.78, 0.70];
const WALL_B: [f32; 3] = [0.60, 0.70, 0.80];
const RED: [f32; 3] = [0.90, 0.10, 0.10];
const BLUE: [f32; 3] = [0.10, 0.20, 0.90];
const GREEN: [f32; 3] = [0.10, 0.80, 0.20];
const PURPLE: [f32; 3] = [0.60, 0.20, 0.70];
const YELLOW: [f32; 3] = [0.95, 0.85, 0.10];

/// A 4 x 4 m room with a red cube by the west wall and a blue cube in the
/// north-east corner. `+z` is up.
pub fn cube_room() -> ScenePointCloud {
    let mut b = Builder::default();
    b.floor([0.0, 0.0], [4.0, 4.0], FLOOR);
    b.wall([0.0, 0.0], [0.0, 4.0], 2.5, WALL_B);
    b.wall([4.0, 0.0], [4.0, 4.0], 2.5, WALL_A);
    b.wall([0.0, 4.0], [4.0, 4.0], 2.5, WALL_A);
    b.wall([0.0, 0.0], [4.0, 0.0], 2.5, WALL_B);
    b.block([0.2, 1.5, 0.0], [0.7, 2.0, 0.5], RED);
    b.block([3.2, 3.2, 0.0], [3.7, 3.7, 0.5], BLUE);
    b.build()
}

/// Two 3 x 3 m rooms joined by a 1 m corridor; a purple sofa stands in
/// the east room and a yellow crate in the west room.
pub fn corridor() -> ScenePointCloud {
    let mut b = Builder::default();
    b.floor([0.0, 0.0], [7.0, 3.0], FLOOR);
    b.wall([0.0, 0.0], [0.0, 3.0], 2.5, WALL_B);
    b.wall([0.0, 0.0], [3.0, 0.0], 2.5, WALL_A);
    b.wall([0.0, 3.0], [3.0, 3.0], 2.5, WALL_A);
    b.wall([3.0, 0.0], [3.0, 1.0], 2.5, WALL_B);
    b.wall([3.0, 2.0], [3.0, 3.0], 2.5, WALL_B);
    b.wall([3.0, 1.0], [4.0, 1.0], 2.5, WALL_A);
    b.wall([3.0, 2.0], [4.0, 2.0], 2.5, WALL_A);
    b.wall([4.0, 0.0], [4.0, 1.0], 2.5, WALL_B);
    b.wall([4.0, 2.0], [4.0, 3.0], 2.5, WALL_B);
    b.wall([4.0, 0.0], [7.0, 0.0], 2.5, WALL_A);
    b.wall([4.0, 3.0], [7.0, 3.0], 2.5, WALL_A);
    b.wall([7.0, 0.0], [7.0, 3.0], 2.5, WALL_B);
    b.block([5.8, 0.8, 0.0], [6.6, 2.2, 0.6], PURPLE);
    b.block([0.3, 0.3, 0.0], [0.8, 0.8, 0.4], YELLOW);
    b.build()
}

/// A 4 x 4 m room split by a divider at `x = 2` that leaves a gap at the
/// north end; a green box sits behind the divider.
pub fn occluded_room() -> ScenePointCloud {
    let mut b = Builder::default();
    b.floor([0.0, 0.0], [4.0, 4.0], FLOOR);
    b.wall([0.0, 0.0], [0.0, 4.0], 2.5, WALL_B);
    b.wall([4.0, 0.0], [4.0, 4.0], 2.5, WALL_A);
    b.wall([0.0, 4.0], [4.0, 4.0], 2.5, WALL_A);
    b.wall([0.0, 0.0], [4.0, 0.0], 2.5, WALL_B);
    b.wall([2.0, 0.0], [2.0, 3.0], 2.0, WALL_A);
    b.block([2.8, 1.0, 0.0], [3.4, 1.6, 0.5], GREEN);
    b.block([0.5, 3.2, 0.0], [0.9, 3.6, 0.3], RED);
    b.build()
}

/// One fixture: a scene plus an episode about it and a scripted reply list.
pub struct Fixture {
    pub name: &'static str,
    pub scene: ScenePointCloud,
    pub episode_id: &'static str,
    pub question: &'static str,
    pub answer: &'static str,
    pub extra_answers: &'static [&'static str],
    pub category: &'static str,
    /// Camera eye and look-at target at the first and last frame; frames
    /// interpolate linearly between them.
    pub path: ([f64; 3], [f64; 3], [f64; 3], [f64; 3]),
    /// Script for the scripted backend, as JSON.
    pub script: &'static str,
}

pub fn all() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "cube_room",
            scene: cube_room(),
            episode_id: "cube_room_001",
            question: "What color is the cube next to the west wall?",
            answer: "red",
            extra_answers: &["red cube"],
            category: "attribute recognition",
            path: ([3.5, 0.5, 1.4], [0.5, 3.5, 0.3], [2.0, 0.4, 1.4], [3.5, 3.5, 0.3]),
            script: r#"[
  {"when": "frames of the scene follow", "reply": "ANSWER: blue"},
  {"when": "SELECT:", "reply": "SELECT: 0, 2"},
  "THINK: The first view shows part of the west wall.\nACTION: move forward",
  "THINK: I should face the west wall directly.\nACTION: yaw left",
  "THINK: The cube is low, look down a little.\nACTION: pitch down",
  "THINK: The cube next to the west wall is red.\nANSWER: red"
]"#,
        },
        Fixture {
            name: "corridor",
            scene: corridor(),
            episode_id: "corridor_001",
            question: "What piece of furniture is in the east room?",
            answer: "sofa",
            extra_answers: &["couch", "purple sofa"],
            category: "object recognition",
            path: ([0.6, 1.5, 1.4], [6.0, 1.5, 0.3], [2.5, 1.5, 1.4], [6.0, 1.4, 0.3]),
            script: r#"[
  {"when": "frames of the scene follow", "reply": "ANSWER: crate"},
  {"when": "SELECT:", "reply": "SELECT: 3, 1"},
  "THINK: The corridor leads east.\nACTION: move forward",
  "THINK: Keep going through the corridor.\nACTION: move forward",
  "THINK: Almost in the east room.\nACTION: move forward",
  "THINK: A purple sofa stands in the east room.\nANSWER: sofa"
]"#,
        },
        Fixture {
            name: "occluded_room",
            scene: occluded_room(),
            episode_id: "occluded_room_001",
            question: "What is hidden behind the divider wall?",
            answer: "green box",
            extra_answers: &["a green box", "box"],
            category: "object localization",
            path: ([0.5, 0.5, 1.4], [2.0, 2.0, 1.0], [1.0, 3.0, 1.4], [2.0, 1.0, 1.0]),
            script: r#"[
  {"when": "frames of the scene follow", "reply": "ANSWER: nothing"},
  {"when": "SELECT:", "reply": "SELECT: 1"},
  "THINK: The divider blocks the view. The gap is to the north.\nACTION: yaw left",
  "THINK: Move toward the gap.\nACTION: move forward",
  "THINK: Turn back to face behind the divider.\nACTION: yaw right",
  "THINK: Behind the divider there is a green box.\nANSWER: green box"
]"#,
        },
    ]
}

impl Fixture {
    /// Camera poses of the episode's video, `FRAMES_PER_EPISODE` of them.
    pub fn frame_poses(&self) -> Vec<CameraPose> {
        let (e0, t0, e1, t1) = self.path;
        (0..FRAMES_PER_EPISODE)
            .map(|i| {
                let s = i as f64 / (FRAMES_PER_EPISODE - 1) as f64;
                let lerp = |a: [f64; 3], b: [f64; 3]| [0, 1, 2].map(|k| a[k] + s * (b[k] - a[k]));
                CameraPose::look_at(lerp(e0, e1), lerp(t0, t1), [0.0, 0.0, 1.0])
            })
            .collect()
    }

    pub fn episode(&self, scene_path: &Path) -> Episode {
        let k = fixture_intrinsics();
        Episode {
            episode_id: self.episode_id.into(),
            scene_path: scene_path.to_path_buf(),
            frames: self
                .frame_poses()
                .into_iter()
                .enumerate()
                .map(|(i, pose)| FrameRecord {
                    frame_id: i as u64,
                    image_path: PathBuf::from(format!("frames/{}/{i:04}.png", self.episode_id)),
                    pose,
                    intrinsics: k,
                })
                .collect(),
            question: self.question.into(),
            ground_truth: self.answer.into(),
            extra_answers: self.extra_answers.iter().map(|s| s.to_string()).collect(),
            category: Some(self.category.into()),
            base_dir: PathBuf::new(),
        }
    }
}

/// Paths of a suite written by [`write_suite`].
#[derive(Debug, Clone)]
pub struct SuitePaths {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub script_dir: PathBuf,
    pub episodes: Vec<PathBuf>,
}

pub const SUITE_CONFIG: &str = r#"[run]
manifest = "manifest.json"
runs_dir = "runs"
mode = "cov"
workers = 1

[backend]
kind = "scripted"
script_dir = "scripts"

[judge]
kind = "rule"

[budget]
min_steps = 3
max_steps = 8

[eval]
subsample_ratio = 10
"#;

/// Writes scenes (`scenes/*.ply`), episodes with their frame images,
/// scripts, `manifest.json` and a `cov.toml` that runs offline.
pub fn write_suite(root: impl AsRef<Path>) -> std::io::Result<SuitePaths> {
    let root = root.as_ref().to_path_buf();
    let script_dir = root.join("scripts");
    for d in ["scenes", "episodes", "scripts"] {
        std::fs::create_dir_all(root.join(d))?;
    }
    let settings = RenderSettings::default();
    let mut episodes = Vec::new();
    for f in all() {
        let scene_rel = PathBuf::from(format!("../scenes/{}.ply", f.name));
        save_ply(&f.scene, root.join("scenes").join(format!("{}.ply", f.name)))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let episode = f.episode(&scene_rel);
        let ep_dir = root.join("episodes");
        std::fs::create_dir_all(ep_dir.join("frames").join(f.episode_id))?;
        for frame in &episode.frames {
            let obs = render_view(&f.scene, &frame.pose, &frame.intrinsics, &settings);
            let png = encode_image(&obs.image, ImageFormat::Png).map_err(|e| std::io::Error::other(e.to_string()))?;
            std::fs::write(ep_dir.join(&frame.image_path), png)?;
        }
        let path = ep_dir.join(format!("{}.json", f.episode_id));
        std::fs::write(&path, episode.to_json())?;
        std::fs::write(script_dir.join(format!("{}.json", f.episode_id)), f.script)?;
        episodes.push(path);
    }
    let rel: Vec<String> = all()
        .iter()
        .map(|f| format!("episodes/{}.json", f.episode_id))
        .collect();
    let manifest = root.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&serde_json::json!({ "episodes": rel }))?)?;
    let config = root.join("cov.toml");
    std::fs::write(&config, SUITE_CONFIG)?;
    Ok(SuitePaths {
        root,
        manifest,
        config,
        script_dir,
        episodes,
    })
}
