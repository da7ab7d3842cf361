use std::fmt::Write as _;
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::TrajectoryStep;
use crate::geometry::{CameraPose, Intrinsics};
use crate::render::{encode_image, render_birds_eye, render_view, BirdsEyeMapping, ImageFormat, RenderSettings};
use crate::scene_io::load_point_cloud;

/// Everything needed to draw an episode's camera path over its overview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub episode_id: String,
    pub mapping: BirdsEyeMapping,
    pub start_pose: CameraPose,
    pub steps: Vec<TrajectoryStep>,
    pub anchor_frame_indices: Vec<usize>,
    pub anchor_poses: Vec<CameraPose>,
}

impl TrajectoryFile {
    /// Start pose followed by the pose after each step.
    pub fn poses(&self) -> Vec<CameraPose> {
        std::iter::once(self.start_pose).chain(self.steps.iter().map(|s| s.pose)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajFormat {
    Json,
    Svg,
}

impl std::str::FromStr for TrajFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(TrajFormat::Json),
            "svg" => Ok(TrajFormat::Svg),
            _ => Err(format!("unknown trajectory format {s:?}; expected json or svg")),
        }
    }
}

pub const FRUSTUM_DEPTH_M: f64 = 0.4;
pub const FRUSTUM_HALF_FOV_DEG: f64 = 30.0;

pub fn load_trajectory(run_dir: &Path, episode_id: &str) -> Result<TrajectoryFile, HarnessError> {
    let path = run_dir.join(episode_id).join("trajectory.json");
    let text = std::fs::read_to_string(&path).map_err(|_| HarnessError::MissingTrajectory {
        episode_id: episode_id.into(),
        run_dir: run_dir.to_path_buf(),
    })?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

/// Triangle apex, left far corner, right far corner, in overview pixels.
fn frustum(mapping: &BirdsEyeMapping, pose: &CameraPose) -> [(f64, f64); 3] {
    let c = pose.center();
    let f = pose.forward();
    let r = pose.right();
    let w = FRUSTUM_HALF_FOV_DEG.to_radians().tan();
    let corner = |s: f64| {
        let p = [0, 1, 2].map(|i| c[i] + FRUSTUM_DEPTH_M * (f[i] + s * w * r[i]));
        mapping.to_pixel(p)
    };
    [mapping.to_pixel(c), corner(-1.0), corner(1.0)]
}

fn polyline(out: &mut String, class: &str, step: Option<usize>, pts: &[(f64, f64)], stroke: &str) {
    let points: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
    let step = step.map(|s| format!(" data-step=\"{s}\"")).unwrap_or_default();
    let _ = writeln!(
        out,
        "  <polyline class=\"{class}\"{step} points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\"/>",
        points.join(" ")
    );
}

/// Top-down frusta over the overview image: every anchor, then the start
/// pose and each step when the episode moved at all.
pub fn trajectory_svg(traj: &TrajectoryFile, birds_eye_png: Option<&[u8]>) -> String {
    let m = &traj.mapping;
    let size = m.size;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    if let Some(png) = birds_eye_png {
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        let _ = writeln!(
            out,
            "  <image x=\"0\" y=\"0\" width=\"{size}\" height=\"{size}\" href=\"data:image/png;base64,{b64}\"/>"
        );
    }
    for (i, pose) in traj.anchor_poses.iter().enumerate() {
        let [a, l, r] = frustum(m, pose);
        polyline(&mut out, "anchor", Some(i), &[a, l, r, a], "#3080ff");
    }
    if !traj.steps.is_empty() {
        let poses = traj.poses();
        let centers: Vec<(f64, f64)> = poses.iter().map(|p| m.to_pixel(p.center())).collect();
        polyline(&mut out, "path", None, &centers, "#ffffff");
        for (t, pose) in poses.iter().enumerate() {
            let [a, l, r] = frustum(m, pose);
            let class = if t == 0 { "start" } else { "step" };
            polyline(&mut out, class, Some(t), &[a, l, r, a], "#ff4040");
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Renders an episode trajectory as JSON or SVG text.
pub fn export_trajectory(run_dir: &Path, episode_id: &str, format: TrajFormat) -> Result<String, HarnessError> {
    let traj = load_trajectory(run_dir, episode_id)?;
    Ok(match format {
        TrajFormat::Json => serde_json::to_string_pretty(&traj).map_err(HarnessError::json(run_dir))? + "\n",
        TrajFormat::Svg => {
            let png = std::fs::read(run_dir.join(episode_id).join("birds_eye.png")).ok();
            trajectory_svg(&traj, png.as_deref())
        }
    })
}

/// `identity`, or sixteen numbers of a row-major camera-to-world matrix
/// separated by commas or whitespace.
pub fn parse_pose_spec(spec: &str) -> Result<CameraPose, HarnessError> {
    if spec.trim().eq_ignore_ascii_case("identity") {
        return Ok(CameraPose::identity());
    }
    let values = parse_numbers(spec)?;
    if values.len() != 16 {
        return Err(HarnessError::Config(format!("pose needs 16 numbers, got {}", values.len())));
    }
    CameraPose::from_row_major(&values).map_err(|e| HarnessError::Config(e.to_string()))
}

/// `fx,fy,cx,cy,width,height`.
pub fn parse_intrinsics_spec(spec: &str) -> Result<Intrinsics, HarnessError> {
    let v = parse_numbers(spec)?;
    if v.len() != 6 {
        return Err(HarnessError::Config(format!("intrinsics need 6 numbers, got {}", v.len())));
    }
    let dim = |x: f64| -> Result<u32, HarnessError> {
        if x >= 1.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) {
            Ok(x as u32)
        } else {
            Err(HarnessError::Config(format!("image dimension {x} is not a positive integer")))
        }
    };
    let k = Intrinsics {
        fx: v[0],
        fy: v[1],
        cx: v[2],
        cy: v[3],
        width: dim(v[4])?,
        height: dim(v[5])?,
    };
    k.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(k)
}

fn parse_numbers(spec: &str) -> Result<Vec<f64>, HarnessError> {
    spec.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| HarnessError::Config(format!("not a number: {s:?}"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewSpec {
    Pose(CameraPose, Intrinsics),
    BirdsEye,
}

/// Loads a scene and writes one rendered view as PNG.
pub fn render_to_file(scene: &Path, view: ViewSpec, settings: &RenderSettings, out: &Path) -> Result<(), HarnessError> {
    settings.validate().map_err(HarnessError::Config)?;
    let cloud = load_point_cloud(scene)?;
    let obs = match view {
        ViewSpec::Pose(pose, k) => render_view(&cloud, &pose, &k, settings),
        ViewSpec::BirdsEye => render_birds_eye(&cloud, settings),
    };
    let png = encode_image(&obs.image, ImageFormat::Png)?;
    std::fs::write(out, png).map_err(HarnessError::io(out))
}
