//! Point-splat rendering of scene views and the top-down overview.
//!
//! Rendering is a pure function of its inputs: points are visited in cloud
//! order and a pixel only changes on a strictly nearer (or, for the
//! overview, strictly higher) sample, so identical inputs give identical
//! rasters regardless of how many renders run concurrently.

use std::io::Cursor;
use std::path::Path;

use image::{ImageEncoder, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project, CameraPose, Intrinsics};
use crate::scene_io::{Aabb, ScenePointCloud};

/// Fraction of the footprint added on each side of the overview.
pub const BIRDS_EYE_MARGIN: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image encoding failed: {0}")]
    EncodeFailure(String),
    #[error("image decoding failed: {0}")]
    DecodeFailure(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// World axis treated as "up" by the overview.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpAxis {
    #[default]
    Z,
    Y,
}

impl UpAxis {
    pub fn vector(self) -> [f64; 3] {
        match self {
            UpAxis::Z => [0.0, 0.0, 1.0],
            UpAxis::Y => [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub splat_radius_px: u32,
    pub background: [f32; 3],
    pub near_m: f64,
    pub far_m: f64,
    pub up_axis: UpAxis,
    /// Side length of the square overview image.
    pub birds_eye_resolution: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            splat_radius_px: 2,
            background: [0.0, 0.0, 0.0],
            near_m: 0.01,
            far_m: 100.0,
            up_axis: UpAxis::Z,
            birds_eye_resolution: 512,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.near_m > 0.0) {
            return Err(format!("render.near_m must be positive, got {}", self.near_m));
        }
        if !(self.far_m > self.near_m) {
            return Err(format!(
                "render.far_m ({}) must exceed near_m ({})",
                self.far_m, self.near_m
            ));
        }
        if self.splat_radius_px > 8 {
            return Err(format!(
                "render.splat_radius_px must be at most 8, got {}",
                self.splat_radius_px
            ));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err("render.background channels must lie in [0, 1]".into());
        }
        if self.birds_eye_resolution == 0 {
            return Err("render.birds_eye_resolution must be positive".into());
        }
        Ok(())
    }
}

/// Where an observation's pixels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// An original video frame; `frame_index` counts subsampled frames.
    AnchorFrame { frame_index: usize },
    Rendered,
    BirdsEye,
}

/// An image together with the camera that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image: RgbImage,
    pub pose: CameraPose,
    pub step_index: usize,
    pub provenance: Provenance,
}

fn quantize(c: f32) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Offsets of a filled disc of the given radius.
fn disc(radius: u32) -> Vec<(i64, i64)> {
    let r = i64::from(radius);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Depth-tested splat buffer. `better(new, old)` decides replacement.
struct SplatBuffer {
    width: u32,
    height: u32,
    key: Vec<f64>,
    color: Vec<[f32; 3]>,
    offsets: Vec<(i64, i64)>,
}

impl SplatBuffer {
    fn new(width: u32, height: u32, radius: u32, empty_key: f64, bg: [f32; 3]) -> Self {
        let n = width as usize * height as usize;
        SplatBuffer {
            width,
            height,
            key: vec![empty_key; n],
            color: vec![bg; n],
            offsets: disc(radius),
        }
    }

    fn splat(&mut self, u: f64, v: f64, key: f64, color: [f32; 3], better: impl Fn(f64, f64) -> bool) {
        let (px, py) = (u.floor() as i64, v.floor() as i64);
        for &(dx, dy) in &self.offsets {
            let (x, y) = (px + dx, py + dy);
            if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
                continue;
            }
            let idx = y as usize * self.width as usize + x as usize;
            if better(key, self.key[idx]) {
                self.key[idx] = key;
                self.color[idx] = color;
            }
        }
    }

    fn into_image(self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (px, c) in img.pixels_mut().zip(&self.color) {
            *px = image::Rgb(c.map(quantize));
        }
        img
    }
}

/// Renders the scene from `pose` with pinhole intrinsics `k`.
///
/// The returned observation has `step_index` 0 and `Rendered` provenance;
/// callers stamp their own step index.
pub fn render_view(
    scene: &ScenePointCloud,
    pose: &CameraPose,
    k: &Intrinsics,
    settings: &RenderSettings,
) -> Observation {
    let mut buf = SplatBuffer::new(
        k.width,
        k.height,
        settings.splat_radius_px,
        f64::INFINITY,
        settings.background,
    );
    for (p, c) in scene.points().iter().zip(scene.colors()) {
        let Some(proj) = project(p.map(f64::from), pose, k) else {
            continue;
        };
        if proj.depth < settings.near_m || proj.depth > settings.far_m {
            continue;
        }
        buf.splat(proj.u, proj.v, proj.depth, *c, |new, old| new < old);
    }
    Observation {
        image: buf.into_image(),
        pose: *pose,
        step_index: 0,
        provenance: Provenance::Rendered,
    }
}

/// Orthographic top-down mapping from world points to overview pixels.
///
/// Image right is world `+x`. With `+z` up, image up is world `+y`; with
/// `+y` up, image up is world `-z`. The scene footprint plus a 5% margin on
/// each side fills the longer image dimension, centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirdsEyeMapping {
    pub up: UpAxis,
    /// Footprint center in (right, image-up) world coordinates.
    pub center: [f64; 2],
    /// Pixels per meter.
    pub scale: f64,
    pub size: u32,
}

impl BirdsEyeMapping {
    pub fn for_bounds(aabb: &Aabb, size: u32, up: UpAxis) -> Self {
        let lo = Self::planar(aabb.min, up);
        let hi = Self::planar(aabb.max, up);
        let extent = [(hi[0] - lo[0]).abs(), (hi[1] - lo[1]).abs()];
        let span = extent[0].max(extent[1]) * (1.0 + 2.0 * BIRDS_EYE_MARGIN);
        let scale = if span > 0.0 {
            f64::from(size) / span
        } else {
            1.0
        };
        BirdsEyeMapping {
            up,
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
            scale,
            size,
        }
    }

    /// World point as (right, image-up) coordinates in meters.
    fn planar(p: [f64; 3], up: UpAxis) -> [f64; 2] {
        match up {
            UpAxis::Z => [p[0], p[1]],
            UpAxis::Y => [p[0], -p[2]],
        }
    }

    pub fn height(&self, p: [f64; 3]) -> f64 {
        match self.up {
            UpAxis::Z => p[2],
            UpAxis::Y => p[1],
        }
    }

    /// Continuous pixel coordinates (x right, y down) of a world point.
    pub fn to_pixel(&self, p: [f64; 3]) -> (f64, f64) {
        let q = Self::planar(p, self.up);
        let half = f64::from(self.size) / 2.0;
        (
            (q[0] - self.center[0]) * self.scale + half,
            half - (q[1] - self.center[1]) * self.scale,
        )
    }

    /// Camera pose above the footprint looking straight down.
    pub fn pose(&self, aabb: &Aabb) -> CameraPose {
        let c = aabb.center();
        let up = self.up.vector();
        let lift = aabb.extent().iter().cloned().fold(1.0, f64::max);
        let eye = [0, 1, 2].map(|i| c[i] + up[i] * lift);
        let image_up = match self.up {
            UpAxis::Z => [0.0, 1.0, 0.0],
            UpAxis::Y => [0.0, 0.0, -1.0],
        };
        CameraPose::look_at(eye, c, image_up)
    }
}

/// Renders the orthographic overview; the highest point wins each pixel.
pub fn render_birds_eye(scene: &ScenePointCloud, settings: &RenderSettings) -> Observation {
    let size = settings.birds_eye_resolution;
    let mapping = BirdsEyeMapping::for_bounds(scene.aabb(), size, settings.up_axis);
    let mut buf = SplatBuffer::new(
        size,
        size,
        settings.splat_radius_px,
        f64::NEG_INFINITY,
        settings.background,
    );
    for (p, c) in scene.points().iter().zip(scene.colors()) {
        let p = p.map(f64::from);
        let (u, v) = mapping.to_pixel(p);
        buf.splat(u, v, mapping.height(p), *c, |new, old| new > old);
    }
    Observation {
        image: buf.into_image(),
        pose: mapping.pose(scene.aabb()),
        step_index: 0,
        provenance: Provenance::BirdsEye,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// JPEG with quality in `1..=100`.
    Jpeg(u8),
}

impl ImageFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg(_) => "image/jpeg",
        }
    }
}

pub fn encode_image(image: &RgbImage, format: ImageFormat) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    let fail = |e: image::ImageError| RenderError::EncodeFailure(e.to_string());
    match format {
        ImageFormat::Png => image::codecs::png::PngEncoder::new(&mut out)
            .write_image(
                image.as_raw(),
                image.width(),
                image.height(),
                image::ExtendedColorType::Rgb8,
            )
            .map_err(fail)?,
        ImageFormat::Jpeg(q) => {
            if !(1..=100).contains(&q) {
                return Err(RenderError::EncodeFailure(format!(
                    "JPEG quality {q} outside 1..=100"
                )));
            }
            image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, q)
                .encode_image(image)
                .map_err(fail)?
        }
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, RenderError> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| RenderError::DecodeFailure(e.to_string()))?
        .decode()
        .map(|img| img.to_rgb8())
        .map_err(|e| RenderError::DecodeFailure(e.to_string()))
}

pub fn load_image(path: &Path) -> Result<RgbImage, RenderError> {
    let bytes = std::fs::read(path).map_err(|source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    pose: CameraPose,
    step_index: usize,
    provenance: Provenance,
}

/// Writes `<step>.png` and its `<step>.json` sidecar into `dir`.
pub fn save_observation(dir: &Path, obs: &Observation) -> Result<(), RenderError> {
    let io = |path: std::path::PathBuf| move |source| RenderError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let png = dir.join(format!("{}.png", obs.step_index));
    std::fs::write(&png, encode_image(&obs.image, ImageFormat::Png)?).map_err(io(png.clone()))?;
    let sidecar = Sidecar {
        pose: obs.pose,
        step_index: obs.step_index,
        provenance: obs.provenance,
    };
    let json = dir.join(format!("{}.json", obs.step_index));
    std::fs::write(
        &json,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(io(json.clone()))
}

/// Reads an observation written by [`save_observation`].
pub fn load_observation(dir: &Path, step_index: usize) -> Result<Observation, RenderError> {
    let image = load_image(&dir.join(format!("{step_index}.png")))?;
    let path = dir.join(format!("{step_index}.json"));
    let text = std::fs::read_to_string(&path).map_err(|source| RenderError::Io {
        path: path.clone(),
        source,
    })?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| RenderError::DecodeFailure(e.to_string()))?;
    Ok(Observation {
        image,
        pose: sidecar.pose,
        step_index: sidecar.step_index,
        provenance: sidecar.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics::default()
    }

    fn radius0() -> RenderSettings {
        RenderSettings {
            splat_radius_px: 0,
            ..Default::default()
        }
    }

    fn non_background(img: &RgbImage, bg: [u8; 3]) -> Vec<(u32, u32, [u8; 3])> {
        img.enumerate_pixels()
            .filter(|(_, _, p)| p.0 != bg)
            .map(|(x, y, p)| (x, y, p.0))
            .collect()
    }

    #[test]
    fn empty_scene_is_background() {
        let settings = RenderSettings {
            background: [0.5, 0.25, 1.0],
            ..Default::default()
        };
        let obs = render_view(&ScenePointCloud::empty(), &CameraPose::identity(), &k(), &settings);
        assert!(obs.image.pixels().all(|p| p.0 == [128, 64, 255]));
        let top = render_birds_eye(&ScenePointCloud::empty(), &settings);
        assert!(top.image.pixels().all(|p| p.0 == [128, 64, 255]));
        assert_eq!(top.provenance, Provenance::BirdsEye);
    }

    #[test]
    fn single_point_on_principal_ray() {
        let scene = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], vec![[1.0, 0.0, 0.0]]).unwrap();
        let obs = render_view(&scene, &CameraPose::identity(), &k(), &radius0());
        assert_eq!(non_background(&obs.image, [0, 0, 0]), vec![(320, 240, [255, 0, 0])]);
    }

    #[test]
    fn nearer_point_wins_regardless_of_order() {
        for order in [[0usize, 1], [1, 0]] {
            let pts = [[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]];
            let cols = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
            let scene = ScenePointCloud::new(
                order.iter().map(|&i| pts[i]).collect(),
                order.iter().map(|&i| cols[i]).collect(),
            )
            .unwrap();
            let obs = render_view(&scene, &CameraPose::identity(), &k(), &radius0());
            assert_eq!(obs.image.get_pixel(320, 240).0, [255, 0, 0]);
        }
    }

    #[test]
    fn splat_radius_fills_disc() {
        let scene = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], vec![[1.0, 1.0, 1.0]]).unwrap();
        let settings = RenderSettings {
            splat_radius_px: 2,
            ..Default::default()
        };
        let obs = render_view(&scene, &CameraPose::identity(), &k(), &settings);
        // lattice points with dx^2 + dy^2 <= 4
        assert_eq!(non_background(&obs.image, [0, 0, 0]).len(), 13);
    }

    #[test]
    fn depth_clip_range() {
        let scene = ScenePointCloud::new(vec![[0.0, 0.0, 150.0]], vec![[1.0, 1.0, 1.0]]).unwrap();
        let obs = render_view(&scene, &CameraPose::identity(), &k(), &radius0());
        assert!(non_background(&obs.image, [0, 0, 0]).is_empty());
    }

    #[test]
    fn birds_eye_single_point_at_center() {
        let scene = ScenePointCloud::new(vec![[3.0, -2.0, 1.0]], vec![[0.0, 1.0, 0.0]]).unwrap();
        let settings = RenderSettings {
            splat_radius_px: 0,
            birds_eye_resolution: 64,
            ..Default::default()
        };
        let obs = render_birds_eye(&scene, &settings);
        assert_eq!(non_background(&obs.image, [0, 0, 0]), vec![(32, 32, [0, 255, 0])]);
    }

    #[test]
    fn birds_eye_highest_wins() {
        let scene = ScenePointCloud::new(
            vec![[0.0, 0.0, 2.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]],
            vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        )
        .unwrap();
        let settings = RenderSettings {
            splat_radius_px: 0,
            birds_eye_resolution: 100,
            ..Default::default()
        };
        let mapping = BirdsEyeMapping::for_bounds(scene.aabb(), 100, UpAxis::Z);
        let (u, v) = mapping.to_pixel([0.0, 0.0, 0.0]);
        let obs = render_birds_eye(&scene, &settings);
        assert_eq!(obs.image.get_pixel(u as u32, v as u32).0, [255, 0, 0]);
    }

    #[test]
    fn y_up_mapping_orientation() {
        let aabb = Aabb {
            min: [-1.0, 0.0, -1.0],
            max: [1.0, 2.0, 1.0],
        };
        let m = BirdsEyeMapping::for_bounds(&aabb, 100, UpAxis::Y);
        let (_, v_far) = m.to_pixel([0.0, 0.0, -1.0]);
        let (_, v_near) = m.to_pixel([0.0, 0.0, 1.0]);
        assert!(v_far < v_near, "-z should be toward the image top");
        assert_eq!(m.height([0.0, 1.5, 0.0]), 1.5);
    }

    #[test]
    fn png_round_trip_and_jpeg_quality_bounds() {
        let mut img = RgbImage::new(7, 5);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = image::Rgb([x as u8 * 30, y as u8 * 50, 7]);
        }
        let png = encode_image(&img, ImageFormat::Png).unwrap();
        assert_eq!(decode_image(&png).unwrap(), img);
        assert!(matches!(
            encode_image(&img, ImageFormat::Jpeg(0)),
            Err(RenderError::EncodeFailure(_))
        ));
    }

    #[test]
    fn observation_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let scene = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], vec![[1.0, 0.0, 0.0]]).unwrap();
        let mut obs = render_view(&scene, &CameraPose::from_translation([0.0, 0.0, -1.0]), &k(), &radius0());
        obs.step_index = 3;
        save_observation(dir.path(), &obs).unwrap();
        assert_eq!(load_observation(dir.path(), 3).unwrap(), obs);
    }

    #[test]
    fn settings_validation() {
        assert!(RenderSettings::default().validate().is_ok());
        let bad = RenderSettings {
            splat_radius_px: 9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RenderSettings {
            far_m: 0.001,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
