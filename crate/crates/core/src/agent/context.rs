use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::gateway::Part;
use crate::geometry::{Action, CameraPose};
use crate::protocol::{ParseError, StepDecision};
use crate::render::{encode_image, ImageFormat, Observation, Provenance, RenderError};

/// An observation in the encoded form sent to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextImage {
    pub bytes: Arc<Vec<u8>>,
    pub media_type: String,
    pub pose: CameraPose,
    pub provenance: Provenance,
}

impl ContextImage {
    pub fn from_observation(obs: &Observation) -> Result<Self, RenderError> {
        Ok(ContextImage {
            bytes: Arc::new(encode_image(&obs.image, ImageFormat::Png)?),
            media_type: ImageFormat::Png.media_type().to_string(),
            pose: obs.pose,
            provenance: obs.provenance,
        })
    }

    pub fn part(&self) -> Part {
        Part::Image {
            data: self.bytes.as_ref().clone(),
            media_type: self.media_type.clone(),
        }
    }

    /// Hex SHA-256 of the encoded bytes.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.bytes.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorView {
    /// Index into the subsampled frame list.
    pub frame_index: usize,
    pub frame_id: u64,
    pub image: ContextImage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextEntry {
    /// An accepted action and the view it produced. `step` counts from 1.
    Step {
        step: usize,
        reply: String,
        decision: StepDecision,
        action: Action,
        image: ContextImage,
    },
    /// An answer given before the step minimum, discarded.
    Nudge {
        reply: String,
        taken: usize,
        min_steps: usize,
    },
    /// A reply that did not parse.
    Retry { reply: String, error: ParseError },
    /// The model is told to answer now: the step cap was reached, or
    /// `reply` failed to parse after the retry budget.
    AnswerNow { reply: Option<String> },
}

/// Loop state: question, anchors, bird's-eye view and every entry since.
///
/// Entries are append-only, so the messages rendered from a context are a
/// prefix of the messages rendered after any later append.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentContext {
    question: String,
    anchors: Vec<AnchorView>,
    birds_eye: ContextImage,
    entries: Vec<ContextEntry>,
    current_pose: CameraPose,
    step_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("the loop needs at least one anchor view")]
    NoAnchors,
}

impl AgentContext {
    /// Starts at the first anchor's pose.
    pub fn new(question: impl Into<String>, anchors: Vec<AnchorView>, birds_eye: ContextImage) -> Result<Self, ContextError> {
        let first = anchors.first().ok_or(ContextError::NoAnchors)?;
        let current_pose = first.image.pose;
        Ok(AgentContext {
            question: question.into(),
            anchors,
            birds_eye,
            entries: Vec::new(),
            current_pose,
            step_count: 0,
        })
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn anchors(&self) -> &[AnchorView] {
        &self.anchors
    }

    pub fn anchor_poses(&self) -> Vec<CameraPose> {
        self.anchors.iter().map(|a| a.image.pose).collect()
    }

    pub fn birds_eye(&self) -> &ContextImage {
        &self.birds_eye
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn current_pose(&self) -> CameraPose {
        self.current_pose
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn nudge_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, ContextEntry::Nudge { .. }))
            .count()
    }

    /// Records an accepted action; the image's pose becomes current.
    pub fn push_step(&mut self, reply: String, decision: StepDecision, action: Action, image: ContextImage) {
        self.step_count += 1;
        self.current_pose = image.pose;
        self.entries.push(ContextEntry::Step {
            step: self.step_count,
            reply,
            decision,
            action,
            image,
        });
    }

    pub fn push_nudge(&mut self, reply: String, min_steps: usize) {
        self.entries.push(ContextEntry::Nudge {
            reply,
            taken: self.step_count,
            min_steps,
        });
    }

    pub fn push_retry(&mut self, reply: String, error: ParseError) {
        self.entries.push(ContextEntry::Retry { reply, error });
    }

    pub fn push_answer_now(&mut self, reply: Option<String>) {
        self.entries.push(ContextEntry::AnswerNow { reply });
    }

    /// Rendered step images, oldest first, as (step, image).
    pub fn step_images(&self) -> impl Iterator<Item = (usize, &ContextImage)> {
        self.entries.iter().filter_map(|e| match e {
            ContextEntry::Step { step, image, .. } => Some((*step, image)),
            _ => None,
        })
    }
}
