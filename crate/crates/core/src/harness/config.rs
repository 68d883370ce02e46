//! Run configuration. Backends are named adapters: an in-process mock, a
//! command template or an HTTP endpoint. Credentials are only ever referred
//! to by environment variable name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::mock::{
    GlyphLabelRenderer, GlyphOcr, HistogramEmbedder, IdentityDiffusion, LayoutRenderer, RecolorDiffusion, ScriptedLlm,
    TemplateLlm,
};
use crate::benchmark::Subject;
use crate::metrics::{CerMatching, EmbedderBackend, OcrBackend, DEFAULT_IOU_THRESHOLD};
use crate::refine::{DiffusionBackend, LabelRenderer, RefineConfig};
use crate::synth::{LlmBackend, RenderLanguage, RenderLimits, RendererBackend};

#[cfg(feature = "sandbox")]
use crate::backends::command::{CommandEmbedder, CommandLlm, CommandOcr, CommandSpec, SubprocessRenderer};
#[cfg(feature = "http")]
use crate::backends::http::HttpDiffusion;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("no {0} backend configured")]
    MissingBackend(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmSpec {
    Template {
        #[serde(default)]
        omit: Vec<String>,
    },
    Scripted {
        scripts: BTreeMap<String, Vec<String>>,
    },
    #[cfg(feature = "sandbox")]
    Command {
        name: String,
        #[serde(flatten)]
        spec: CommandSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RendererSpec {
    Layout {
        #[serde(default = "default_layout_margin")]
        margin: u32,
    },
    #[cfg(feature = "sandbox")]
    Subprocess {
        commands: BTreeMap<RenderLanguage, CommandSpec>,
    },
}

fn default_layout_margin() -> u32 {
    LayoutRenderer::default().margin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Identity,
    Recolor {
        #[serde(default = "default_jitter")]
        max_jitter: u8,
    },
    #[cfg(feature = "http")]
    Http {
        name: String,
        url: String,
        #[serde(default)]
        auth_env: Option<String>,
        #[serde(default)]
        timeout_ms: Option<u64>,
    },
}

fn default_jitter() -> u8 {
    RecolorDiffusion::default().max_jitter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OcrSpec {
    Glyph,
    #[cfg(feature = "sandbox")]
    Command {
        name: String,
        #[serde(flatten)]
        spec: CommandSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    Histogram,
    #[cfg(feature = "sandbox")]
    Command {
        name: String,
        dimension: usize,
        #[serde(flatten)]
        spec: CommandSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelRendererSpec {
    Glyph {
        #[serde(default = "default_label_padding")]
        padding: u32,
    },
}

fn default_label_padding() -> u32 {
    GlyphLabelRenderer::default().padding
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub llm: Option<LlmSpec>,
    pub renderer: Option<RendererSpec>,
    pub diffusion: Option<DiffusionSpec>,
    pub ocr: Option<OcrSpec>,
    pub embedder: Option<EmbedderSpec>,
    /// Redraw labels instead of copying their pixels back. Off by default.
    #[serde(default)]
    pub labels: Option<LabelRendererSpec>,
}

impl BackendsConfig {
    /// Every role filled with a deterministic in-process mock.
    pub fn mock() -> Self {
        Self {
            llm: Some(LlmSpec::Template { omit: Vec::new() }),
            renderer: Some(RendererSpec::Layout {
                margin: default_layout_margin(),
            }),
            diffusion: Some(DiffusionSpec::Recolor {
                max_jitter: default_jitter(),
            }),
            ocr: Some(OcrSpec::Glyph),
            embedder: Some(EmbedderSpec::Histogram),
            labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanguagePolicy {
    /// Use this language for every prompt.
    pub fixed: Option<RenderLanguage>,
    pub by_subject: BTreeMap<Subject, RenderLanguage>,
    /// Ask the LLM to choose; `by_subject` is the fallback when the reply
    /// names no known language. Ignored when `fixed` is set.
    pub ask_llm: bool,
}

impl Default for LanguagePolicy {
    fn default() -> Self {
        Self {
            fixed: None,
            by_subject: BTreeMap::from([
                (Subject::Biology, RenderLanguage::Svg),
                (Subject::Chemistry, RenderLanguage::PythonMatplotlib),
                (Subject::Physics, RenderLanguage::PythonMatplotlib),
                (Subject::Mathematics, RenderLanguage::LatexTikz),
            ]),
            ask_llm: false,
        }
    }
}

impl LanguagePolicy {
    pub fn language_for(&self, subject: Subject) -> RenderLanguage {
        self.fixed
            .or_else(|| self.by_subject.get(&subject).copied())
            .unwrap_or(RenderLanguage::PythonMatplotlib)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleConfig {
    pub strength: f64,
    /// Replaces the grade-band templates for every prompt.
    pub prompt: Option<String>,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            strength: 0.75,
            prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Row label used for this configuration in reports.
    pub label: String,
    pub seed: u64,
    pub jobs: usize,
    pub max_attempts: u32,
    pub language: LanguagePolicy,
    pub limits: RenderLimits,
    pub refine: RefineConfig,
    pub style: StyleConfig,
    pub iou_threshold: f64,
    pub cer_matching: CerMatching,
    pub backends: BackendsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            label: "CAGE".into(),
            seed: 0,
            jobs: 1,
            max_attempts: 3,
            language: LanguagePolicy::default(),
            limits: RenderLimits::default(),
            refine: RefineConfig::default(),
            style: StyleConfig::default(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            cer_matching: CerMatching::default(),
            backends: BackendsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn mock() -> Self {
        Self {
            backends: BackendsConfig::mock(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be at least 1".into()));
        }
        if !(self.style.strength > 0.0 && self.style.strength <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "style.strength must lie in (0, 1], got {}",
                self.style.strength
            )));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(ConfigError::Invalid(format!(
                "iou_threshold must lie in [0, 1], got {}",
                self.iou_threshold
            )));
        }
        self.refine.canny.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

/// Instantiated clients for one run.
pub struct Backends {
    pub llm: Box<dyn LlmBackend>,
    pub renderer: Box<dyn RendererBackend>,
    pub diffusion: Box<dyn DiffusionBackend>,
    pub ocr: Option<Box<dyn OcrBackend>>,
    pub embedder: Option<Box<dyn EmbedderBackend>>,
    pub labels: Option<Box<dyn LabelRenderer>>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("llm", &self.llm.name())
            .field("renderer", &self.renderer.name())
            .field("diffusion", &self.diffusion.name())
            .field("ocr", &self.ocr.as_ref().map(|o| o.name().to_string()))
            .field("embedder", &self.embedder.as_ref().map(|e| e.name().to_string()))
            .field("labels", &self.labels.as_ref().map(|l| l.name().to_string()))
            .finish()
    }
}

pub fn build_llm(spec: &LlmSpec) -> Box<dyn LlmBackend> {
    match spec {
        LlmSpec::Template { omit } => Box::new(TemplateLlm::omitting(omit)),
        LlmSpec::Scripted { scripts } => Box::new(
            scripts
                .iter()
                .fold(ScriptedLlm::new(), |s, (id, r)| s.script(id.clone(), r.clone())),
        ),
        #[cfg(feature = "sandbox")]
        LlmSpec::Command { name, spec } => Box::new(CommandLlm {
            name: name.clone(),
            spec: spec.clone(),
        }),
    }
}

pub fn build_renderer(spec: &RendererSpec) -> Box<dyn RendererBackend> {
    match spec {
        RendererSpec::Layout { margin } => Box::new(LayoutRenderer { margin: *margin }),
        #[cfg(feature = "sandbox")]
        RendererSpec::Subprocess { commands } => Box::new(SubprocessRenderer {
            commands: commands.clone(),
        }),
    }
}

pub fn build_label_renderer(spec: &LabelRendererSpec) -> Box<dyn LabelRenderer> {
    match spec {
        LabelRendererSpec::Glyph { padding } => Box::new(GlyphLabelRenderer { padding: *padding }),
    }
}

pub fn build_diffusion(spec: &DiffusionSpec) -> Box<dyn DiffusionBackend> {
    match spec {
        DiffusionSpec::Identity => Box::new(IdentityDiffusion),
        DiffusionSpec::Recolor { max_jitter } => Box::new(RecolorDiffusion {
            max_jitter: *max_jitter,
        }),
        #[cfg(feature = "http")]
        DiffusionSpec::Http {
            name,
            url,
            auth_env,
            timeout_ms,
        } => Box::new(HttpDiffusion {
            name: name.clone(),
            url: url.clone(),
            auth_env: auth_env.clone(),
            timeout_ms: timeout_ms.unwrap_or(120_000),
        }),
    }
}

pub fn build_ocr(spec: &OcrSpec) -> Box<dyn OcrBackend> {
    match spec {
        OcrSpec::Glyph => Box::new(GlyphOcr),
        #[cfg(feature = "sandbox")]
        OcrSpec::Command { name, spec } => Box::new(CommandOcr {
            name: name.clone(),
            spec: spec.clone(),
        }),
    }
}

pub fn build_embedder(spec: &EmbedderSpec) -> Box<dyn EmbedderBackend> {
    match spec {
        EmbedderSpec::Histogram => Box::new(HistogramEmbedder),
        #[cfg(feature = "sandbox")]
        EmbedderSpec::Command { name, dimension, spec } => Box::new(CommandEmbedder {
            name: name.clone(),
            dimension: *dimension,
            spec: spec.clone(),
        }),
    }
}

impl Backends {
    /// Fails when a generation backend (llm, renderer, diffusion) is absent.
    pub fn from_config(cfg: &BackendsConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            llm: build_llm(cfg.llm.as_ref().ok_or(ConfigError::MissingBackend("llm"))?),
            renderer: build_renderer(cfg.renderer.as_ref().ok_or(ConfigError::MissingBackend("renderer"))?),
            diffusion: build_diffusion(cfg.diffusion.as_ref().ok_or(ConfigError::MissingBackend("diffusion"))?),
            ocr: cfg.ocr.as_ref().map(build_ocr),
            embedder: cfg.embedder.as_ref().map(build_embedder),
            labels: cfg.labels.as_ref().map(build_label_renderer),
        })
    }
}
