//! Prompt templates and the message lists built from them.
//!
//! Templates are plain text with `{name}` placeholders (`{{` and `}}` for
//! literal braces). The `v1` set is compiled in; [`TemplateSet::load_dir`]
//! reads a replacement set from disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{AgentContext, ContextEntry, ContextImage};
use crate::gateway::{ChatMessage, Part, Role};
use crate::geometry::{Action, MotionConfig};

pub const TEMPLATE_VERSION: &str = "v1";

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../prompts/v1/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "baseline_system",
    "baseline_user",
    "view_select_system",
    "view_select_user",
    "cov_step_system",
    "cov_step_user",
    "cov_step_birds_eye",
    "cov_step_start",
    "cov_step_observation",
    "step_clause_min",
    "step_clause_max",
    "cov_budget_nudge",
    "cov_answer_now",
    "parse_retry",
    "select_retry",
    "judge_system",
    "judge_user",
    "judge_retry",
);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no template named {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} uses unbound placeholder {{{name}}}")]
    Unbound { template: String, name: String },
    #[error("template {template:?} has an unterminated placeholder")]
    Unterminated { template: String },
    #[error("view selection needs at least one frame")]
    NoFrames,
    #[error("{count} images exceed the limit of {limit}")]
    TooManyImages { count: usize, limit: usize },
    #[error("reading templates: {0}")]
    Io(String),
}

/// A named collection of templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            version: TEMPLATE_VERSION.into(),
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Starts from the builtin set and replaces every template for which
    /// `dir/<name>.txt` exists.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut set = Self::builtin();
        set.version = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        for (name, body) in set.templates.iter_mut() {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                *body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownTemplate(name.into()))
    }

    pub fn render(&self, name: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        fill(name, self.get(name)?, bindings)
    }

    /// Hex SHA-256 over every template, for run provenance.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.templates {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            h.update((v.len() as u64).to_le_bytes());
            h.update(v.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Substitutes `{name}` placeholders. Every placeholder must be bound.
pub fn fill(template_name: &str, template: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
        } else if tail.starts_with('}') {
            out.push('}');
            rest = &tail[1..];
        } else {
            let end = tail.find('}').ok_or_else(|| PromptError::Unterminated {
                template: template_name.into(),
            })?;
            let name = &tail[1..end];
            let value = bindings
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::Unbound {
                    template: template_name.into(),
                    name: name.into(),
                })?;
            out.push_str(value);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// How loop turns are laid out in the request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Framing {
    /// One user turn per step, with the model's replies in between.
    #[default]
    Interleaved,
    /// Everything in a single user message.
    SingleShot,
}

fn text(s: impl Into<String>) -> Part {
    Part::Text(s.into())
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Frames shown to the view selection agent, already subsampled.
pub struct SelectFrame<'a> {
    pub index: usize,
    pub image: &'a ContextImage,
}

pub fn render_view_select(
    set: &TemplateSet,
    question: &str,
    frames: &[SelectFrame<'_>],
    k_max: usize,
    max_images: usize,
) -> Result<Vec<ChatMessage>, PromptError> {
    if frames.is_empty() {
        return Err(PromptError::NoFrames);
    }
    if frames.len() > max_images {
        return Err(PromptError::TooManyImages {
            count: frames.len(),
            limit: max_images,
        });
    }
    let count = frames.len().to_string();
    let last = (frames.len() - 1).to_string();
    let k = k_max.to_string();
    let mut parts = vec![text(set.render(
        "view_select_user",
        &[("question", question), ("frame_count", &count), ("last_index", &last), ("k_max", &k)],
    )?)];
    for f in frames {
        parts.push(text(format!("Frame {}:", f.index)));
        parts.push(f.image.part());
    }
    Ok(vec![
        ChatMessage::new(Role::System, vec![text(set.render("view_select_system", &[])?)]),
        ChatMessage::new(Role::User, parts),
    ])
}

pub fn render_baseline(set: &TemplateSet, question: &str, frames: &[&ContextImage], max_images: usize) -> Result<Vec<ChatMessage>, PromptError> {
    if frames.len() > max_images {
        return Err(PromptError::TooManyImages {
            count: frames.len(),
            limit: max_images,
        });
    }
    let count = frames.len().to_string();
    let mut parts = vec![text(set.render("baseline_user", &[("question", question), ("frame_count", &count)])?)];
    parts.extend(frames.iter().map(|f| f.part()));
    Ok(vec![
        ChatMessage::new(Role::System, vec![text(set.render("baseline_system", &[])?)]),
        ChatMessage::new(Role::User, parts),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovPromptOptions {
    pub min_steps: usize,
    pub max_steps: usize,
    pub framing: Framing,
    /// Total image cap per request; `None` keeps every image.
    pub max_images: Option<usize>,
    pub motion: MotionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub messages: Vec<ChatMessage>,
    /// Steps whose images were replaced by a text stub to fit `max_images`.
    pub evicted_steps: Vec<usize>,
}

pub fn verb_list() -> String {
    Action::MOTIONS
        .iter()
        .map(|a| format!("- {}\n", a.verb()))
        .collect()
}

fn motion_units(m: &MotionConfig) -> String {
    let rot = if m.yaw_deg == m.pitch_deg && m.pitch_deg == m.roll_deg {
        format!("each rotation turns {} degrees", fmt_num(m.yaw_deg))
    } else {
        format!(
            "yaw turns {}, pitch {} and roll {} degrees",
            fmt_num(m.yaw_deg),
            fmt_num(m.pitch_deg),
            fmt_num(m.roll_deg)
        )
    };
    format!("each translation moves {} m, {rot}", fmt_num(m.step_m))
}

pub fn render_cov_system(set: &TemplateSet, anchor_count: usize, opts: &CovPromptOptions) -> Result<String, PromptError> {
    let min = opts.min_steps.to_string();
    let max = opts.max_steps.to_string();
    let clause = if opts.min_steps > 0 {
        set.render("step_clause_min", &[("min_steps", &min), ("max_steps", &max)])?
    } else {
        set.render("step_clause_max", &[("max_steps", &max)])?
    };
    let last = anchor_count.saturating_sub(1).to_string();
    set.render(
        "cov_step_system",
        &[
            ("motion_units", &motion_units(&opts.motion)),
            ("verb_list", &verb_list()),
            ("last_anchor", &last),
            ("step_clause", clause.trim_end()),
            ("min_steps", &min),
            ("max_steps", &max),
        ],
    )
}

/// Builds the request for the next loop turn from the whole context.
pub fn render_cov_step(set: &TemplateSet, ctx: &AgentContext, opts: &CovPromptOptions) -> Result<RenderedPrompt, PromptError> {
    let max_s = opts.max_steps.to_string();
    let min_s = opts.min_steps.to_string();
    let fixed_images = ctx.anchors().len() + 1;
    let step_images = ctx.step_images().count();
    let mut evict = 0;
    if let Some(cap) = opts.max_images {
        if fixed_images > cap {
            return Err(PromptError::TooManyImages {
                count: fixed_images,
                limit: cap,
            });
        }
        evict = (fixed_images + step_images).saturating_sub(cap);
    }
    let evicted_steps: Vec<usize> = ctx.step_images().take(evict).map(|(s, _)| s).collect();

    let mut head = vec![text(set.render("cov_step_user", &[("question", ctx.question())])?)];
    for (i, a) in ctx.anchors().iter().enumerate() {
        head.push(text(format!("View {i} (frame {}):", a.frame_index)));
        head.push(a.image.part());
    }
    head.push(text(set.render("cov_step_birds_eye", &[])?));
    head.push(ctx.birds_eye().part());
    head.push(text(set.render("cov_step_start", &[])?));

    let mut messages = vec![
        ChatMessage::new(Role::System, vec![text(render_cov_system(set, ctx.anchors().len(), opts)?)]),
        ChatMessage::new(Role::User, head),
    ];

    for entry in ctx.entries() {
        let (reply, user_parts): (Option<&str>, Vec<Part>) = match entry {
            ContextEntry::Step {
                step,
                reply,
                action,
                image,
                ..
            } => {
                let step_s = step.to_string();
                let caption = set.render(
                    "cov_step_observation",
                    &[("step", &step_s), ("max_steps", &max_s), ("action", &action.verb())],
                )?;
                let img = if evicted_steps.contains(step) {
                    text(format!("[image from step {step} omitted to fit the image limit]"))
                } else {
                    image.part()
                };
                (Some(reply), vec![text(caption.trim_end()), img])
            }
            ContextEntry::Nudge { reply, taken, min_steps } => {
                let t = taken.to_string();
                let m = min_steps.to_string();
                (Some(reply), vec![text(set.render("cov_budget_nudge", &[("taken", &t), ("min_steps", &m)])?)])
            }
            ContextEntry::Retry { reply, error } => (
                Some(reply),
                vec![text(set.render(
                    "parse_retry",
                    &[("error", &error.to_string()), ("span", error.span())],
                )?)],
            ),
            ContextEntry::AnswerNow { reply } => (
                reply.as_deref(),
                vec![text(set.render(
                    "cov_answer_now",
                    &[("max_steps", &max_s), ("min_steps", &min_s), ("question", ctx.question())],
                )?)],
            ),
        };
        match opts.framing {
            Framing::Interleaved => {
                if let Some(r) = reply {
                    messages.push(ChatMessage::assistant(r));
                }
                messages.push(ChatMessage::new(Role::User, user_parts));
            }
            Framing::SingleShot => {
                let user = &mut messages[1].parts;
                if let Some(r) = reply {
                    user.push(text(format!("Your reply: {r}")));
                }
                user.extend(user_parts);
            }
        }
    }
    Ok(RenderedPrompt { messages, evicted_steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeOptions {
    pub include_extras: bool,
    pub include_category: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions {
            include_extras: true,
            include_category: true,
        }
    }
}

pub const NO_ANSWER: &str = "(no answer)";

pub fn render_judge(
    set: &TemplateSet,
    question: &str,
    ground_truth: &str,
    extra_answers: &[String],
    category: Option<&str>,
    prediction: &str,
    opts: JudgeOptions,
) -> Result<Vec<ChatMessage>, PromptError> {
    let extras = if opts.include_extras && !extra_answers.is_empty() {
        format!("Other acceptable answers: {}\n", extra_answers.join("; "))
    } else {
        String::new()
    };
    let cat = match category {
        Some(c) if opts.include_category && !c.trim().is_empty() => format!("Question category: {c}\n"),
        _ => String::new(),
    };
    let pred = if prediction.trim().is_empty() { NO_ANSWER } else { prediction };
    Ok(vec![
        ChatMessage::system(set.render("judge_system", &[])?),
        ChatMessage::user_text(set.render(
            "judge_user",
            &[
                ("question", question),
                ("ground_truth", ground_truth),
                ("extras_block", &extras),
                ("category_block", &cat),
                ("prediction", pred),
            ],
        )?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AnchorView;
    use crate::geometry::CameraPose;
    use crate::protocol::{Decision, StepDecision};
    use crate::render::Provenance;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn img(tag: u8, provenance: Provenance) -> ContextImage {
        ContextImage {
            bytes: Arc::new(vec![tag]),
            media_type: "image/png".into(),
            pose: CameraPose::identity(),
            provenance,
        }
    }

    fn context(anchors: usize) -> AgentContext {
        let anchors = (0..anchors)
            .map(|i| AnchorView {
                frame_index: i * 2,
                frame_id: i as u64 * 20,
                image: img(100 + i as u8, Provenance::AnchorFrame { frame_index: i * 2 }),
            })
            .collect();
        AgentContext::new("Where is the red chair?", anchors, img(200, Provenance::BirdsEye)).unwrap()
    }

    fn step(ctx: &mut AgentContext, tag: u8) {
        let d = StepDecision {
            thought: None,
            decision: Decision::Act(Action::MoveForward),
        };
        ctx.push_step("ACTION: move forward".into(), d, Action::MoveForward, img(tag, Provenance::Rendered));
    }

    fn opts(min: usize, max: usize) -> CovPromptOptions {
        CovPromptOptions {
            min_steps: min,
            max_steps: max,
            framing: Framing::Interleaved,
            max_images: None,
            motion: MotionConfig::default(),
        }
    }

    fn image_tags(msgs: &[ChatMessage]) -> Vec<u8> {
        msgs.iter()
            .flat_map(|m| &m.parts)
            .filter_map(|p| match p {
                Part::Image { data, .. } => Some(data[0]),
                Part::Text(_) => None,
            })
            .collect()
    }

    fn all_text(msgs: &[ChatMessage]) -> String {
        msgs.iter().map(ChatMessage::text).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn fill_rules() {
        assert_eq!(fill("t", "a {x} {{y}} }", &[("x", "1")]).unwrap(), "a 1 {y} }");
        assert!(matches!(fill("t", "{x}", &[]), Err(PromptError::Unbound { name, .. }) if name == "x"));
        assert!(matches!(fill("t", "{x", &[("x", "1")]), Err(PromptError::Unterminated { .. })));
    }

    #[test]
    fn view_select_structure() {
        let set = TemplateSet::builtin();
        let images: Vec<ContextImage> = (0..12).map(|i| img(i, Provenance::AnchorFrame { frame_index: i as usize })).collect();
        let frames: Vec<SelectFrame> = images.iter().enumerate().map(|(i, im)| SelectFrame { index: i, image: im }).collect();
        let q = "Which side of the bed is the lamp on?";
        let msgs = render_view_select(&set, q, &frames, 6, 64).unwrap();
        assert_eq!(image_tags(&msgs), (0..12).collect::<Vec<u8>>());
        let t = all_text(&msgs);
        assert_eq!(t.matches(q).count(), 1);
        let select_parts = msgs
            .iter()
            .flat_map(|m| &m.parts)
            .filter(|p| matches!(p, Part::Text(s) if s.contains("SELECT:")))
            .count();
        assert_eq!(select_parts, 1);
        assert_eq!(render_view_select(&set, q, &[], 6, 64), Err(PromptError::NoFrames));
        assert!(matches!(
            render_view_select(&set, q, &frames, 6, 10),
            Err(PromptError::TooManyImages { count: 12, limit: 10 })
        ));
    }

    #[test]
    fn step_clause() {
        let set = TemplateSet::builtin();
        let ctx = context(2);
        let none = all_text(&render_cov_step(&set, &ctx, &opts(0, 12)).unwrap().messages);
        assert!(!none.contains("at least"));
        let both = all_text(&render_cov_step(&set, &ctx, &opts(3, 7)).unwrap().messages);
        assert!(both.contains("take at least 3 actions before answering; you may take at most 7"));
    }

    #[test]
    fn system_lists_every_verb() {
        let set = TemplateSet::builtin();
        let sys = render_cov_system(&set, 3, &opts(1, 5)).unwrap();
        for a in Action::MOTIONS {
            assert!(sys.contains(&a.verb()), "{}", a.verb());
        }
        assert!(sys.contains("switch to view"));
        assert!(sys.contains("ANSWER:") && sys.contains("ACTION:") && sys.contains("THINK:"));
    }

    #[test]
    fn images_in_chronological_order_and_prefix() {
        let set = TemplateSet::builtin();
        let mut ctx = context(2);
        let before = render_cov_step(&set, &ctx, &opts(0, 12)).unwrap().messages;
        step(&mut ctx, 1);
        ctx.push_nudge("ANSWER: no".into(), 3);
        step(&mut ctx, 2);
        let after = render_cov_step(&set, &ctx, &opts(0, 12)).unwrap().messages;
        assert_eq!(image_tags(&after), [100, 101, 200, 1, 2]);
        assert_eq!(&after[..before.len()], &before[..]);
        assert_eq!(after.len(), before.len() + 6);
    }

    #[test]
    fn eviction_drops_oldest_rendered_only() {
        let set = TemplateSet::builtin();
        let mut ctx = context(2);
        for t in 1..=4 {
            step(&mut ctx, t);
        }
        let mut o = opts(0, 12);
        o.max_images = Some(5);
        let r = render_cov_step(&set, &ctx, &o).unwrap();
        assert_eq!(r.evicted_steps, [1, 2]);
        assert_eq!(image_tags(&r.messages), [100, 101, 200, 3, 4]);
        o.max_images = Some(2);
        assert!(render_cov_step(&set, &ctx, &o).is_err());
    }

    #[test]
    fn single_shot_is_one_user_message() {
        let set = TemplateSet::builtin();
        let mut ctx = context(1);
        step(&mut ctx, 1);
        let mut o = opts(0, 12);
        o.framing = Framing::SingleShot;
        let msgs = render_cov_step(&set, &ctx, &o).unwrap().messages;
        assert_eq!(msgs.len(), 2);
        assert_eq!(image_tags(&msgs), [100, 200, 1]);
    }

    #[test]
    fn judge_prompt() {
        let set = TemplateSet::builtin();
        let m = render_judge(&set, "q?", "chair", &[], None, "chair", JudgeOptions::default()).unwrap();
        assert_eq!(all_text(&m).matches("chair").count(), 2);
        let empty = render_judge(&set, "q?", "chair", &["seat".into()], Some("object"), " ", JudgeOptions::default()).unwrap();
        let t = all_text(&empty);
        assert!(t.contains(NO_ANSWER) && t.contains("seat") && t.contains("object"));
        let plain = JudgeOptions {
            include_extras: false,
            include_category: false,
        };
        let t = all_text(&render_judge(&set, "q?", "chair", &["seat".into()], Some("object"), "x", plain).unwrap());
        assert!(!t.contains("seat") && !t.contains("object"));
        // Rubric text does not depend on the item being judged.
        let m2 = render_judge(&set, "other", "table", &[], None, "desk", JudgeOptions::default()).unwrap();
        assert_eq!(
            crate::gateway::request_hash(&m[..1]),
            crate::gateway::request_hash(&m2[..1])
        );
    }

    #[test]
    fn every_builtin_template_renders_with_its_placeholders() {
        let set = TemplateSet::builtin();
        for (name, body) in BUILTIN {
            let mut names = Vec::new();
            let mut rest = *body;
            while let Some(i) = rest.find('{') {
                let end = rest[i..].find('}').unwrap() + i;
                names.push(&rest[i + 1..end]);
                rest = &rest[end + 1..];
            }
            let bindings: Vec<(&str, &str)> = names.iter().map(|n| (*n, "X")).collect();
            assert!(set.render(name, &bindings).is_ok(), "{name}");
        }
    }

    #[test]
    fn load_dir_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("judge_retry.txt"), "just a digit").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.get("judge_retry").unwrap(), "just a digit");
        assert_eq!(set.get("judge_system").unwrap(), TemplateSet::builtin().get("judge_system").unwrap());
        assert_ne!(set.fingerprint(), TemplateSet::builtin().fingerprint());
    }

    proptest! {
        #[test]
        fn judge_render_is_injective(a in "[a-z ]{0,12}", b in "[a-z ]{0,12}", c in "[a-z]{1,12}", d in "[a-z]{1,12}") {
            let set = TemplateSet::builtin();
            let r1 = render_judge(&set, &a, &c, &[], None, &d, JudgeOptions::default()).unwrap();
            let r2 = render_judge(&set, &b, &c, &[], None, &d, JudgeOptions::default()).unwrap();
            prop_assert_eq!(a == b, crate::gateway::request_hash(&r1) == crate::gateway::request_hash(&r2));
        }
    }
}
