use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geometry::{CameraPose, Intrinsics};

/// One video frame of an episode with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    /// Image path as written in the episode file (relative to it).
    pub image_path: PathBuf,
    /// Camera-to-world pose.
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
}

/// A question about one scene, with the frames sampled from its video.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    /// Scene path as written in the episode file (relative to it).
    pub scene_path: PathBuf,
    pub frames: Vec<FrameRecord>,
    pub question: String,
    pub ground_truth: String,
    pub extra_answers: Vec<String>,
    pub category: Option<String>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Episode {
    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn resolved_scene_path(&self) -> PathBuf {
        self.resolve(&self.scene_path)
    }

    pub fn resolved_image_path(&self, frame: &FrameRecord) -> PathBuf {
        self.resolve(&frame.image_path)
    }

    /// Serializes to the on-disk episode schema.
    pub fn to_json(&self) -> String {
        let raw = RawEpisode {
            episode_id: self.episode_id.clone(),
            scene: self.scene_path.to_string_lossy().into_owned(),
            frames: self
                .frames
                .iter()
                .map(|f| RawFrame {
                    id: f.frame_id,
                    image: f.image_path.to_string_lossy().into_owned(),
                    pose: f.pose.to_row_major().to_vec(),
                    intrinsics: f.intrinsics,
                })
                .collect(),
            question: self.question.clone(),
            answer: self.ground_truth.clone(),
            extra_answers: (!self.extra_answers.is_empty()).then(|| self.extra_answers.clone()),
            category: self.category.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("episode serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Fail when a frame's image file does not exist.
    pub strict_images: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            strict_images: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFrame {
    id: u64,
    image: String,
    pose: Vec<f64>,
    intrinsics: Intrinsics,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEpisode {
    episode_id: String,
    scene: String,
    frames: Vec<RawFrame>,
    question: String,
    answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_answers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
}

pub fn load_episode(path: impl AsRef<Path>, options: LoadOptions) -> Result<Episode, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    parse_episode(&text, path, &base_dir, options)
}

/// Parses and validates an episode document. `path` is used for messages;
/// relative paths inside the document resolve against `base_dir`.
pub fn parse_episode(
    text: &str,
    path: &Path,
    base_dir: &Path,
    options: LoadOptions,
) -> Result<Episode, SceneError> {
    let violation = |reason: String| SceneError::SchemaViolation {
        path: path.to_path_buf(),
        reason,
    };
    let raw: RawEpisode = serde_json::from_str(text).map_err(|e| violation(e.to_string()))?;

    if raw.question.trim().is_empty() {
        return Err(violation("field `question` is empty".into()));
    }
    if raw.frames.is_empty() {
        return Err(violation("field `frames` is empty".into()));
    }
    let mut seen = HashSet::new();
    let mut frames = Vec::with_capacity(raw.frames.len());
    for (i, f) in raw.frames.into_iter().enumerate() {
        if !seen.insert(f.id) {
            return Err(violation(format!("frames[{i}].id {} is duplicated", f.id)));
        }
        let pose = CameraPose::from_row_major(&f.pose)
            .map_err(|e| violation(format!("frames[{i}].pose: {e}")))?;
        f.intrinsics
            .validate()
            .map_err(|e| violation(format!("frames[{i}].intrinsics: {e}")))?;
        let image_path = PathBuf::from(&f.image);
        if options.strict_images && !base_dir.join(&image_path).is_file() {
            return Err(SceneError::DanglingReference {
                path: path.to_path_buf(),
                frame_id: f.id,
                image: image_path,
            });
        }
        frames.push(FrameRecord {
            frame_id: f.id,
            image_path,
            pose,
            intrinsics: f.intrinsics,
        });
    }

    Ok(Episode {
        episode_id: raw.episode_id,
        scene_path: PathBuf::from(raw.scene),
        frames,
        question: raw.question,
        ground_truth: raw.answer,
        extra_answers: raw.extra_answers.unwrap_or_default(),
        category: raw.category,
        base_dir: base_dir.to_path_buf(),
    })
}
