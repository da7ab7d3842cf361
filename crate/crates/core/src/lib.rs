//! Active viewpoint reasoning for embodied question answering.
//!
//! A chat-with-images model first picks question-relevant anchor frames
//! from an episode's video, then explores the 3D scene by issuing discrete
//! camera actions. Each action moves a virtual camera, a new view is
//! rendered from the scene's point cloud, and the growing context is sent
//! back to the model until it answers or the step budget runs out.
//!
//! Module map:
//!
//! - [`scene_io`]: point clouds (PLY, native cache) and episode files
//! - [`geometry`]: rigid poses, pinhole projection, the action vocabulary
//! - [`render`]: point-splat views and the top-down overview
//! - [`gateway`]: chat backends (OpenAI-compatible HTTP, scripted mocks,
//!   record/replay)
//! - [`prompts`]: prompt templates for every stage
//! - [`protocol`]: parsing model replies into decisions
//! - [`agent`]: view selection and the exploration loop
//! - [`metrics`]: LLM-Match, EM@1, BLEU-4, ROUGE-L, CIDEr
//! - [`harness`]: batch runs, step sweeps, scoring, artifact export
//! - [`fixtures`]: deterministic synthetic scenes and episodes

pub mod agent;
pub mod fixtures;
pub mod gateway;
pub mod harness;
pub mod geometry;
pub mod metrics;
pub mod prompts;
pub mod protocol;
pub mod render;
pub mod scene_io;
