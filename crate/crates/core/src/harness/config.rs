use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BackendFactory, HarnessError};
use crate::agent::{AgentConfig, LoopBudget, RunMode};
use crate::gateway::{BackendConfig, ChatBackend, HiddenObjectOracle, OpenAiBackend, RecordReplay, ScriptedBackend, ScriptedTranscript};
use crate::geometry::MotionConfig;
use crate::metrics::RuleJudge;
use crate::prompts::{Framing, JudgeOptions, TemplateSet};
use crate::protocol::SelectionMode;
use crate::render::RenderSettings;
use crate::scene_io::Episode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// JSON file listing episode files, `{"episodes": [...]}`.
    pub manifest: PathBuf,
    pub runs_dir: PathBuf,
    /// Directory name under `runs_dir`; defaults to the mode name.
    pub run_id: Option<String>,
    pub mode: RunMode,
    pub workers: usize,
    pub force: bool,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    pub rerender_anchors: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            manifest: PathBuf::from("manifest.json"),
            runs_dir: PathBuf::from("runs"),
            run_id: None,
            mode: RunMode::Cov,
            workers: 1,
            force: false,
            templates: None,
            rerender_anchors: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Openai,
    /// Per-episode scripts from `script_dir/<episode_id>.json`.
    Scripted,
    /// The hidden-object oracle, revealing the answer after `oracle_k` actions.
    Oracle,
    /// Cached responses from `replay`.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(flatten)]
    pub openai: BackendConfig,
    pub script_dir: Option<PathBuf>,
    pub oracle_k: usize,
    /// Record every response of an `openai` backend to this session file.
    pub record: Option<PathBuf>,
    pub replay: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::default(),
            openai: BackendConfig::default(),
            script_dir: None,
            oracle_k: 3,
            record: None,
            replay: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    /// Exact match after normalization scores 5, anything else 1.
    #[default]
    Rule,
    Openai,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeSection {
    pub kind: JudgeKind,
    #[serde(flatten)]
    pub openai: BackendConfig,
    pub include_extras: bool,
    pub include_category: bool,
}

impl Default for JudgeSection {
    fn default() -> Self {
        JudgeSection {
            kind: JudgeKind::default(),
            openai: BackendConfig::default(),
            include_extras: true,
            include_category: true,
        }
    }
}

impl JudgeSection {
    pub fn options(&self) -> JudgeOptions {
        JudgeOptions {
            include_extras: self.include_extras,
            include_category: self.include_category,
        }
    }

    pub fn backend(&self) -> Result<Option<Box<dyn ChatBackend>>, HarnessError> {
        Ok(match self.kind {
            JudgeKind::Rule => Some(Box::new(RuleJudge)),
            JudgeKind::Openai => Some(Box::new(OpenAiBackend::new(self.openai.clone())?)),
            JudgeKind::None => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub min_steps: usize,
    pub max_steps: usize,
    pub max_parse_retries: usize,
    pub max_nudges: usize,
    pub k_max: usize,
    pub selection_mode: SelectionMode,
    pub framing: Framing,
    pub context_max_images: Option<usize>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        let b = LoopBudget::default();
        let a = AgentConfig::default();
        BudgetSection {
            min_steps: b.min_steps,
            max_steps: b.max_steps,
            max_parse_retries: b.max_parse_retries,
            max_nudges: b.max_nudges,
            k_max: a.k_max,
            selection_mode: a.selection_mode,
            framing: a.framing,
            context_max_images: a.context_max_images,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub subsample_ratio: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { subsample_ratio: 10 }
    }
}

/// The whole `cov.toml`. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub run: RunSection,
    pub backend: BackendSection,
    pub judge: JudgeSection,
    pub motion: MotionConfig,
    pub render: RenderSettings,
    pub budget: BudgetSection,
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<RunMode>,
    pub min_steps: Option<usize>,
    pub max_steps: Option<usize>,
    pub ratio: Option<usize>,
    pub backend_endpoint: Option<String>,
    pub model: Option<String>,
    pub replay: Option<PathBuf>,
    pub force: bool,
    pub workers: Option<usize>,
}

impl HarnessConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.run.mode = m;
        }
        if let Some(n) = o.min_steps {
            self.budget.min_steps = n;
        }
        if let Some(n) = o.max_steps {
            self.budget.max_steps = n;
        }
        if let Some(r) = o.ratio {
            self.eval.subsample_ratio = r;
        }
        if let Some(e) = &o.backend_endpoint {
            self.backend.openai.endpoint = e.clone();
        }
        if let Some(m) = &o.model {
            self.backend.openai.model_name = m.clone();
        }
        if let Some(p) = &o.replay {
            self.backend.kind = BackendKind::Replay;
            self.backend.replay = Some(std::path::absolute(p).unwrap_or_else(|_| p.clone()));
        }
        if o.force {
            self.run.force = true;
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        let id = self.run.run_id.clone().unwrap_or_else(|| self.run.mode.as_str().to_string());
        self.resolve(&self.run.runs_dir).join(id)
    }

    pub fn agent_config(&self) -> Result<AgentConfig, HarnessError> {
        let templates = match &self.run.templates {
            Some(dir) => TemplateSet::load_dir(self.resolve(dir)).map_err(|e| HarnessError::Config(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        let b = &self.budget;
        let cfg = AgentConfig {
            budget: LoopBudget {
                min_steps: b.min_steps,
                max_steps: b.max_steps,
                max_parse_retries: b.max_parse_retries,
                max_nudges: b.max_nudges,
            },
            motion: self.motion,
            render: self.render,
            k_max: b.k_max,
            selection_mode: b.selection_mode,
            framing: b.framing,
            context_max_images: b.context_max_images,
            backend_max_images: self.backend.openai.max_images,
            subsample_ratio: self.eval.subsample_ratio,
            rerender_anchors: self.run.rerender_anchors,
            templates,
        };
        cfg.validate().map_err(HarnessError::Config)?;
        if self.run.workers == 0 {
            return Err(HarnessError::Config("run.workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn backend_factory(&self) -> Result<ConfigBackendFactory, HarnessError> {
        let b = &self.backend;
        let shared: Option<Arc<dyn ChatBackend>> = match b.kind {
            BackendKind::Openai => {
                b.openai.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                let inner = OpenAiBackend::new(b.openai.clone())?;
                Some(match &b.record {
                    Some(p) => Arc::new(RecordReplay::record(Box::new(inner), self.resolve(p))?),
                    None => Arc::new(inner),
                })
            }
            BackendKind::Replay => {
                let p = b
                    .replay
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("backend.kind = \"replay\" needs backend.replay".into()))?;
                Some(Arc::new(RecordReplay::replay(self.resolve(p))?))
            }
            BackendKind::Scripted | BackendKind::Oracle => {
                if b.record.is_some() {
                    return Err(HarnessError::Config("backend.record only applies to the openai backend".into()));
                }
                None
            }
        };
        let script_dir = match (b.kind, &b.script_dir) {
            (BackendKind::Scripted, None) => {
                return Err(HarnessError::Config("backend.kind = \"scripted\" needs backend.script_dir".into()))
            }
            (_, d) => d.as_ref().map(|d| self.resolve(d)),
        };
        Ok(ConfigBackendFactory {
            kind: b.kind,
            shared,
            script_dir,
            oracle_k: b.oracle_k,
            max_images: b.openai.max_images,
        })
    }
}

/// The factory described by a config's `[backend]` section.
pub struct ConfigBackendFactory {
    kind: BackendKind,
    shared: Option<Arc<dyn ChatBackend>>,
    script_dir: Option<PathBuf>,
    oracle_k: usize,
    max_images: usize,
}

impl BackendFactory for ConfigBackendFactory {
    fn for_episode(&self, episode: &Episode) -> Result<Box<dyn ChatBackend>, HarnessError> {
        if let Some(shared) = &self.shared {
            return Ok(Box::new(shared.clone()));
        }
        match self.kind {
            BackendKind::Oracle => Ok(Box::new(HiddenObjectOracle::new(self.oracle_k, episode.ground_truth.clone()))),
            _ => {
                let dir = self.script_dir.as_ref().expect("scripted factory has a script dir");
                let script = ScriptedTranscript::load(dir.join(format!("{}.json", episode.episode_id)))?;
                Ok(Box::new(ScriptedBackend::new(script).with_max_images(self.max_images)))
            }
        }
    }
}
