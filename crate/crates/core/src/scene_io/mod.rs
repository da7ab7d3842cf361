//! Scene and episode loading.
//!
//! A scene is a colored point cloud read from PLY (ASCII or binary
//! little-endian) or from the compact native cache written by
//! [`save_cache`]. Episodes are JSON documents describing the video frames,
//! their camera poses, and the question to answer.

mod cache;
mod episode;
mod ply;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{save_cache, CACHE_MAGIC};
pub use episode::{load_episode, parse_episode, Episode, FrameRecord, LoadOptions};
pub use ply::{parse_ply, save_ply};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("unsupported format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("schema violation in {path}: {reason}")]
    SchemaViolation { path: PathBuf, reason: String },
    #[error("frame {frame_id} of {path} references missing image {image}")]
    DanglingReference {
        path: PathBuf,
        frame_id: u64,
        image: PathBuf,
    },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SceneError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Axis-aligned bounding box in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// The degenerate box at the origin, used for empty clouds.
    pub const ORIGIN: Aabb = Aabb {
        min: [0.0; 3],
        max: [0.0; 3],
    };

    pub fn from_points(points: &[[f32; 3]]) -> Aabb {
        let Some(first) = points.first() else {
            return Aabb::ORIGIN;
        };
        let mut min = first.map(f64::from);
        let mut max = min;
        for p in &points[1..] {
            for axis in 0..3 {
                let v = f64::from(p[axis]);
                min[axis] = min[axis].min(v);
                max[axis] = max[axis].max(v);
            }
        }
        Aabb { min, max }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min.map(|v| v - margin),
            max: self.max.map(|v| v + margin),
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 0.5 * (self.min[a] + self.max[a]))
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }
}

/// A colored point cloud in world coordinates.
///
/// Points and colors are parallel arrays; colors are linear RGB in `[0, 1]`.
/// The struct is immutable once built so it can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePointCloud {
    points: Vec<[f32; 3]>,
    colors: Vec<[f32; 3]>,
    aabb: Aabb,
}

impl ScenePointCloud {
    /// Validates and builds a cloud. Returns a description of the first
    /// violated invariant on failure.
    pub fn new(points: Vec<[f32; 3]>, colors: Vec<[f32; 3]>) -> Result<Self, String> {
        if points.len() != colors.len() {
            return Err(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            ));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(format!("point {i} has a non-finite coordinate"));
        }
        if let Some(i) = colors
            .iter()
            .position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(format!("color {i} is outside [0, 1]"));
        }
        let aabb = Aabb::from_points(&points);
        Ok(ScenePointCloud {
            points,
            colors,
            aabb,
        })
    }

    pub fn empty() -> Self {
        ScenePointCloud {
            points: Vec::new(),
            colors: Vec::new(),
            aabb: Aabb::ORIGIN,
        }
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn aabb(&self) -> &Aabb {
        &self.aabb
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Loads a point cloud, dispatching on the file's leading bytes: `ply` for
/// PLY, [`CACHE_MAGIC`] for the native cache.
pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<ScenePointCloud, SceneError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| SceneError::io(path, e))?;
    if bytes.starts_with(CACHE_MAGIC) {
        cache::parse_cache(&bytes, path)
    } else if bytes.starts_with(b"ply") {
        ply::parse_ply(&bytes, path)
    } else {
        Err(SceneError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "neither a PLY file nor a native cache".into(),
        })
    }
}

/// Keeps frames at indices `0, ratio, 2*ratio, ...`.
///
/// A ratio of zero is treated as one.
pub fn subsample_frames<T: Clone>(frames: &[T], ratio: usize) -> Vec<T> {
    frames.iter().step_by(ratio.max(1)).cloned().collect()
}
