//! Rigid camera poses and the discrete camera action vocabulary.
//!
//! Camera frame convention: `+z` forward, `+x` right, `+y` down
//! (right-handed). Poses are camera-to-world: a camera-frame point `p_c`
//! maps to `R * p_c + t` in the world, so `t` is the camera center.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scene_io::Aabb;

/// Points closer than this to the image plane do not project.
pub const NEAR_PLANE_M: f64 = 1e-4;

/// Tolerance accepted when reading poses from external files.
const LOAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("anchor index {index} out of range for {count} anchors")]
    InvalidAnchor { index: usize, count: usize },
    #[error("an answer is not a camera motion")]
    AnswerNotAMotion,
    #[error("expected 16 matrix entries, got {0}")]
    WrongLength(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("not a rigid transform: {0}")]
    NotRigid(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a rotation that is orthonormal within `1e-4`.
    /// Rotations that are not exactly orthonormal are snapped onto SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let err = orthonormality_error(&rotation);
        if err > LOAD_TOLERANCE {
            return Err(GeometryError::NotRigid(format!(
                "rotation deviates from orthonormal by {err:.3e}"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(GeometryError::NotRigid("rotation is a reflection".into()));
        }
        let rotation = if err > 1e-12 {
            orthonormalize(&rotation)
        } else {
            rotation
        };
        Ok(CameraPose {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::from(t),
        }
    }

    /// Camera at `eye` looking at `target`, with image-up aligned to
    /// `world_up` as far as possible.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], world_up: [f64; 3]) -> Self {
        let forward = (Vector3::from(target) - Vector3::from(eye)).normalize();
        let down = -Vector3::from(world_up);
        let mut right = down.cross(&forward);
        if right.norm() < 1e-9 {
            // looking straight along the up axis; pick any perpendicular
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = alt.cross(&forward);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        CameraPose {
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: Vector3::from(eye),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> [f64; 3] {
        self.translation.into()
    }

    /// Viewing direction in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into()
    }

    pub fn right(&self) -> Vector3<f64> {
        self.rotation.column(0).into()
    }

    pub fn down(&self) -> Vector3<f64> {
        self.rotation.column(1).into()
    }

    /// Row-major 4x4 homogeneous matrix.
    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_row_major(m: &[f64]) -> Result<Self, GeometryError> {
        if m.len() != 16 {
            return Err(GeometryError::WrongLength(m.len()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let bottom = [m[12], m[13], m[14], m[15] - 1.0];
        if bottom.iter().any(|v| v.abs() > LOAD_TOLERANCE) {
            return Err(GeometryError::NotRigid(format!(
                "bottom row is {:?}, expected [0, 0, 0, 1]",
                &m[12..]
            )));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        CameraPose::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }

    /// Maps a camera-frame point to world coordinates.
    pub fn transform_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a world point into the camera frame.
    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

impl Serialize for CameraPose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        CameraPose::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Gram-Schmidt onto SO(3), keeping the first column's direction.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x: Vector3<f64> = r.column(0).normalize();
    let c1: Vector3<f64> = r.column(1).into();
    let y = (c1 - x * x.dot(&c1)).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Rigid composition `a * b`.
pub fn compose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    CameraPose {
        rotation: orthonormalize(&(a.rotation * b.rotation)),
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(p: &CameraPose) -> CameraPose {
    let rt = p.rotation.transpose();
    CameraPose {
        rotation: rt,
        translation: -(rt * p.translation),
    }
}

/// Pinhole camera parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidIntrinsics(msg));
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return bad(format!("focal lengths must be positive, got {} {}", self.fx, self.fy));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) {
            return bad(format!("cx {} outside [0, {})", self.cx, self.width));
        }
        if !(0.0..f64::from(self.height)).contains(&self.cy) {
            return bad(format!("cy {} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Same field of view at a different resolution.
    pub fn scaled_to(&self, width: u32, height: u32) -> Intrinsics {
        let sx = f64::from(width) / f64::from(self.width);
        let sy = f64::from(height) / f64::from(self.height);
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

/// A pixel location with the point's depth along the viewing axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a world point. `None` when the point is at or behind the near
/// plane or lands outside the image.
pub fn project(point: [f64; 3], pose: &CameraPose, k: &Intrinsics) -> Option<Projection> {
    let pc = pose.to_camera(Vector3::from(point));
    if pc.z <= NEAR_PLANE_M {
        return None;
    }
    let u = k.fx * pc.x / pc.z + k.cx;
    let v = k.fy * pc.y / pc.z + k.cy;
    if u < 0.0 || v < 0.0 || u >= f64::from(k.width) || v >= f64::from(k.height) {
        return None;
    }
    Some(Projection { u, v, depth: pc.z })
}

/// Back-projects a pixel at a known depth to world coordinates.
pub fn unproject(u: f64, v: f64, depth: f64, pose: &CameraPose, k: &Intrinsics) -> [f64; 3] {
    let pc = Vector3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
    pose.transform_point(pc).into()
}

/// The discrete action vocabulary of the exploration loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    MoveBackward,
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    YawLeft,
    YawRight,
    PitchUp,
    PitchDown,
    RollCW,
    RollCCW,
    SwitchTo(usize),
    Answer(String),
}

impl Action {
    /// The twelve fixed camera motions.
    pub const MOTIONS: [Action; 12] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::MoveLeft,
        Action::MoveRight,
        Action::MoveUp,
        Action::MoveDown,
        Action::YawLeft,
        Action::YawRight,
        Action::PitchUp,
        Action::PitchDown,
        Action::RollCW,
        Action::RollCCW,
    ];

    /// The action that undoes this one, for fixed motions.
    pub fn inverse(&self) -> Option<Action> {
        use Action::*;
        Some(match self {
            MoveForward => MoveBackward,
            MoveBackward => MoveForward,
            MoveLeft => MoveRight,
            MoveRight => MoveLeft,
            MoveUp => MoveDown,
            MoveDown => MoveUp,
            YawLeft => YawRight,
            YawRight => YawLeft,
            PitchUp => PitchDown,
            PitchDown => PitchUp,
            RollCW => RollCCW,
            RollCCW => RollCW,
            SwitchTo(_) | Answer(_) => return None,
        })
    }

    /// Canonical verb phrase, as taught to the model and accepted by the
    /// parser. `SwitchTo` includes its index.
    pub fn verb(&self) -> String {
        use Action::*;
        match self {
            MoveForward => "move forward".into(),
            MoveBackward => "move backward".into(),
            MoveLeft => "move left".into(),
            MoveRight => "move right".into(),
            MoveUp => "move up".into(),
            MoveDown => "move down".into(),
            YawLeft => "yaw left".into(),
            YawRight => "yaw right".into(),
            PitchUp => "pitch up".into(),
            PitchDown => "pitch down".into(),
            RollCW => "roll clockwise".into(),
            RollCCW => "roll counterclockwise".into(),
            SwitchTo(i) => format!("switch to view {i}"),
            Answer(text) => format!("answer {text}"),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.verb())
    }
}

/// Which direction `MoveUp`/`MoveDown` follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerticalMode {
    /// Along the camera's own `-y` axis.
    #[default]
    Camera,
    /// Along world `+z`.
    WorldZ,
    /// Along world `+y`.
    WorldY,
}

/// Magnitudes of the fixed camera motions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub step_m: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    /// How far the camera center may leave the scene bounds.
    pub clamp_margin_m: f64,
    pub vertical: VerticalMode,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            step_m: 0.3,
            yaw_deg: 30.0,
            pitch_deg: 30.0,
            roll_deg: 30.0,
            clamp_margin_m: 0.5,
            vertical: VerticalMode::Camera,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("step_m", self.step_m),
            ("yaw_deg", self.yaw_deg),
            ("pitch_deg", self.pitch_deg),
            ("roll_deg", self.roll_deg),
            ("clamp_margin_m", self.clamp_margin_m),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("motion.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// The camera-local rotation applied by a rotational action, or `None`
/// for translations.
pub fn local_rotation(action: &Action, config: &MotionConfig) -> Option<Matrix3<f64>> {
    use Action::*;
    let (yaw, pitch, roll) = (
        config.yaw_deg.to_radians(),
        config.pitch_deg.to_radians(),
        config.roll_deg.to_radians(),
    );
    Some(match action {
        // +y is down, so a positive turn about it swings +z toward +x (right).
        YawLeft => rot_y(-yaw),
        YawRight => rot_y(yaw),
        // positive turn about +x swings +z toward -y (up).
        PitchUp => rot_x(pitch),
        PitchDown => rot_x(-pitch),
        RollCW => rot_z(roll),
        RollCCW => rot_z(-roll),
        _ => return None,
    })
}

/// Displacement of a translational action, in camera coordinates.
pub fn local_translation(action: &Action, step: f64) -> Option<Vector3<f64>> {
    use Action::*;
    Some(match action {
        MoveForward => Vector3::new(0.0, 0.0, step),
        MoveBackward => Vector3::new(0.0, 0.0, -step),
        MoveLeft => Vector3::new(-step, 0.0, 0.0),
        MoveRight => Vector3::new(step, 0.0, 0.0),
        MoveUp => Vector3::new(0.0, -step, 0.0),
        MoveDown => Vector3::new(0.0, step, 0.0),
        _ => return None,
    })
}

/// Applies one action to a pose.
///
/// Translations move along camera axes (or the world vertical, per
/// [`VerticalMode`]) and the resulting center is clamped into `bounds`
/// grown by `clamp_margin_m`. Rotations turn about camera axes.
/// `SwitchTo(k)` returns `anchors[k]` unchanged.
pub fn apply_action(
    pose: &CameraPose,
    action: &Action,
    config: &MotionConfig,
    bounds: &Aabb,
    anchors: &[CameraPose],
) -> Result<CameraPose, GeometryError> {
    match action {
        Action::Answer(_) => Err(GeometryError::AnswerNotAMotion),
        Action::SwitchTo(index) => anchors
            .get(*index)
            .copied()
            .ok_or(GeometryError::InvalidAnchor {
                index: *index,
                count: anchors.len(),
            }),
        _ => {
            if let Some(local) = local_translation(action, config.step_m) {
                let world_delta = match (config.vertical, action) {
                    (VerticalMode::WorldZ, Action::MoveUp) => Vector3::new(0.0, 0.0, config.step_m),
                    (VerticalMode::WorldZ, Action::MoveDown) => {
                        Vector3::new(0.0, 0.0, -config.step_m)
                    }
                    (VerticalMode::WorldY, Action::MoveUp) => Vector3::new(0.0, config.step_m, 0.0),
                    (VerticalMode::WorldY, Action::MoveDown) => {
                        Vector3::new(0.0, -config.step_m, 0.0)
                    }
                    _ => pose.rotation * local,
                };
                let limits = bounds.expanded(config.clamp_margin_m);
                let moved = pose.translation + world_delta;
                let clamped = Vector3::from_fn(|i, _| moved[i].clamp(limits.min[i], limits.max[i]));
                Ok(CameraPose {
                    rotation: pose.rotation,
                    translation: clamped,
                })
            } else {
                let local = local_rotation(action, config).expect("remaining actions rotate");
                Ok(CameraPose {
                    rotation: orthonormalize(&(pose.rotation * local)),
                    translation: pose.translation,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn big_box() -> Aabb {
        Aabb {
            min: [-1e6; 3],
            max: [1e6; 3],
        }
    }

    fn max_diff(a: &CameraPose, b: &CameraPose) -> f64 {
        a.to_row_major()
            .iter()
            .zip(b.to_row_major())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn arb_pose() -> impl Strategy<Value = CameraPose> {
        (
            proptest::array::uniform3(-1.0f64..1.0),
            -std::f64::consts::PI..std::f64::consts::PI,
            proptest::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter_map("degenerate axis", |(axis, angle, t)| {
                let axis = Vector3::from(axis);
                (axis.norm() > 1e-3).then(|| {
                    let r = nalgebra::Rotation3::from_axis_angle(
                        &nalgebra::Unit::new_normalize(axis),
                        angle,
                    );
                    CameraPose::new(*r.matrix(), Vector3::from(t)).unwrap()
                })
            })
    }

    #[test]
    fn forward_from_origin() {
        let p = apply_action(
            &CameraPose::identity(),
            &Action::MoveForward,
            &MotionConfig::default(),
            &big_box(),
            &[],
        )
        .unwrap();
        assert_abs_diff_eq!(p.center()[2], 0.3, epsilon = 1e-15);
        assert_eq!(p.center()[0], 0.0);
    }

    #[test]
    fn yaw_left_looks_left() {
        let p = apply_action(
            &CameraPose::identity(),
            &Action::YawLeft,
            &MotionConfig::default(),
            &big_box(),
            &[],
        )
        .unwrap();
        assert!(p.forward().x < 0.0, "forward {:?}", p.forward());
        let up = apply_action(
            &CameraPose::identity(),
            &Action::PitchUp,
            &MotionConfig::default(),
            &big_box(),
            &[],
        )
        .unwrap();
        assert!(up.forward().y < 0.0);
    }

    #[test]
    fn full_yaw_turn() {
        let cfg = MotionConfig::default();
        let start = CameraPose::look_at([0.3, 0.2, 1.0], [2.0, 1.0, 0.5], [0.0, 0.0, 1.0]);
        let mut p = start;
        for _ in 0..12 {
            p = apply_action(&p, &Action::YawLeft, &cfg, &big_box(), &[]).unwrap();
        }
        assert!((p.rotation() - start.rotation()).abs().max() < 1e-6);
    }

    #[test]
    fn switch_and_answer() {
        let anchors = [CameraPose::from_translation([1.0, 2.0, 3.0])];
        let cfg = MotionConfig::default();
        let got =
            apply_action(&CameraPose::identity(), &Action::SwitchTo(0), &cfg, &big_box(), &anchors)
                .unwrap();
        assert_eq!(got, anchors[0]);
        assert_eq!(
            apply_action(&got, &Action::SwitchTo(1), &cfg, &big_box(), &anchors),
            Err(GeometryError::InvalidAnchor { index: 1, count: 1 })
        );
        assert_eq!(
            apply_action(&got, &Action::Answer("x".into()), &cfg, &big_box(), &anchors),
            Err(GeometryError::AnswerNotAMotion)
        );
    }

    #[test]
    fn clamps_into_bounds() {
        let bounds = Aabb {
            min: [0.0; 3],
            max: [1.0; 3],
        };
        let cfg = MotionConfig::default();
        let mut p = CameraPose::from_translation([0.5, 0.5, 1.4]);
        for _ in 0..5 {
            p = apply_action(&p, &Action::MoveForward, &cfg, &bounds, &[]).unwrap();
            assert!(bounds.expanded(cfg.clamp_margin_m).contains(p.center()));
        }
        assert_eq!(p.center()[2], 1.5);
    }

    #[test]
    fn world_vertical_mode() {
        let cfg = MotionConfig {
            vertical: VerticalMode::WorldZ,
            ..Default::default()
        };
        let tilted = CameraPose::look_at([0.0; 3], [1.0, 0.0, -1.0], [0.0, 0.0, 1.0]);
        let p = apply_action(&tilted, &Action::MoveUp, &cfg, &big_box(), &[]).unwrap();
        assert_abs_diff_eq!(p.center()[2], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(p.center()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn look_at_is_rigid_and_faces_target() {
        let p = CameraPose::look_at([1.0, 2.0, 3.0], [4.0, 2.0, 3.0], [0.0, 0.0, 1.0]);
        assert!(p.orthonormality_error() < 1e-12);
        assert_abs_diff_eq!(p.rotation().determinant(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.forward().x, 1.0, epsilon = 1e-12);
        // image-down points to world -z
        assert_abs_diff_eq!(p.down().z, -1.0, epsilon = 1e-12);
        let straight_down = CameraPose::look_at([0.0, 0.0, 5.0], [0.0; 3], [0.0, 0.0, 1.0]);
        assert!(straight_down.orthonormality_error() < 1e-12);
    }

    #[test]
    fn principal_ray_and_behind() {
        let k = Intrinsics::default();
        let pose = CameraPose::identity();
        let p = project([0.0, 0.0, 2.5], &pose, &k).unwrap();
        assert_eq!((p.u, p.v, p.depth), (k.cx, k.cy, 2.5));
        assert!(project([0.0, 0.0, -1.0], &pose, &k).is_none());
        assert!(project([0.0, 0.0, 0.0], &pose, &k).is_none());
        assert!(project([100.0, 0.0, 1.0], &pose, &k).is_none());
    }

    #[test]
    fn row_major_validation() {
        assert_eq!(
            CameraPose::from_row_major(&[0.0; 15]),
            Err(GeometryError::WrongLength(15))
        );
        let mut m = CameraPose::identity().to_row_major();
        m[0] = 2.0;
        assert!(matches!(CameraPose::from_row_major(&m), Err(GeometryError::NotRigid(_))));
        let mut refl = CameraPose::identity().to_row_major();
        refl[0] = -1.0;
        assert!(matches!(CameraPose::from_row_major(&refl), Err(GeometryError::NotRigid(_))));
        let mut nan = CameraPose::identity().to_row_major();
        nan[3] = f64::NAN;
        assert_eq!(CameraPose::from_row_major(&nan), Err(GeometryError::NonFinite));
    }

    #[test]
    fn slightly_off_rotation_is_snapped() {
        let mut m = CameraPose::identity().to_row_major();
        m[1] = 1e-7;
        let p = CameraPose::from_row_major(&m).unwrap();
        assert!(p.orthonormality_error() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::default().validate().is_ok());
        let mut k = Intrinsics::default();
        k.cx = 640.0;
        assert!(k.validate().is_err());
        k = Intrinsics::default();
        k.fy = 0.0;
        assert!(k.validate().is_err());
    }

    #[test]
    fn pose_serde_is_row_major() {
        let p = CameraPose::from_translation([1.0, 2.0, 3.0]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[1.0,0.0,0.0,1.0,0.0,1.0,0.0,2.0,0.0,0.0,1.0,3.0,0.0,0.0,0.0,1.0]");
        let back: CameraPose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn inverse_action_undoes(pose in arb_pose(), which in 0usize..12) {
            let cfg = MotionConfig::default();
            let a = &Action::MOTIONS[which];
            let moved = apply_action(&pose, a, &cfg, &big_box(), &[]).unwrap();
            let back = apply_action(&moved, &a.inverse().unwrap(), &cfg, &big_box(), &[]).unwrap();
            prop_assert!(max_diff(&back, &pose) < 1e-9);
        }

        #[test]
        fn project_unproject(pose in arb_pose(), u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.1f64..20.0) {
            let k = Intrinsics::default();
            let w = unproject(u, v, d, &pose, &k);
            let p = project(w, &pose, &k).unwrap();
            let back = unproject(p.u, p.v, p.depth, &pose, &k);
            for i in 0..3 {
                prop_assert!((back[i] - w[i]).abs() < 1e-6);
            }
            prop_assert!((p.depth - d).abs() < 1e-9);
        }

        #[test]
        fn clamping_is_idempotent(which in 0usize..6, reps in 1usize..20) {
            let bounds = Aabb { min: [-1.0; 3], max: [1.0; 3] };
            let cfg = MotionConfig::default();
            let mut p = CameraPose::look_at([0.2, 0.1, 0.0], [1.0, 0.3, 0.2], [0.0, 0.0, 1.0]);
            for _ in 0..reps {
                p = apply_action(&p, &Action::MOTIONS[which], &cfg, &bounds, &[]).unwrap();
                prop_assert!(bounds.expanded(cfg.clamp_margin_m).contains(p.center()));
            }
        }
    }
}
