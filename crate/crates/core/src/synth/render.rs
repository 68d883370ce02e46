use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::CodeArtifact;
use crate::benchmark::normalize_label;
use crate::geometry::BBox;
use crate::imaging::RasterImage;

/// Sidecar written by renderers that know where they drew each label.
pub const REGIONS_FILE: &str = "regions.json";
/// Optional connectivity sidecar used by the structure check.
pub const STRUCTURE_FILE: &str = "structure.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureGraph {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

/// Executed rendering of a [`CodeArtifact`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: RasterImage,
    /// Authoritative label positions, empty when the renderer reports none.
    pub regions: Vec<TextRegion>,
    pub structure: Option<StructureGraph>,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderLimits {
    pub timeout_ms: u64,
    /// Upper bound on `width * height` of the produced image.
    pub max_output_pixels: u64,
}

impl Default for RenderLimits {
    fn default() -> Self {
        Self {
            timeout_ms: 30_000,
            max_output_pixels: 16 * 1024 * 1024,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("artifact source is empty")]
    EmptySource,
    #[error("renderer timed out after {limit_ms} ms")]
    Timeout { limit_ms: u64 },
    #[error("renderer exited with status {code:?}: {stderr}")]
    NonZeroExit {
        code: Option<i32>,
        stderr: String,
        stdout: String,
    },
    #[error("renderer produced no image at {0}")]
    MissingOutput(PathBuf),
    #[error("cannot decode rendered image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("rendered image has {pixels} pixels, limit is {max}")]
    TooLarge { pixels: u64, max: u64 },
    #[error("malformed sidecar {file}: {message}")]
    Sidecar { file: String, message: String },
    #[error("no renderer configured for {0}")]
    NoRenderer(String),
    #[error("sandbox setup failed: {0}")]
    Sandbox(String),
    #[error("renderer failed: {0}")]
    Backend(String),
}

/// Executes generated code. Implementations must not touch anything outside
/// their own scratch directory.
pub trait RendererBackend: Send + Sync {
    fn name(&self) -> &str;

    fn render(&self, artifact: &CodeArtifact, limits: &RenderLimits) -> Result<RenderOutput, RenderError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Runs `renderer` and enforces the output contract: the image respects the
/// pixel limit, regions are clipped to the image, and only regions whose
/// text is one of the artifact's extracted labels are kept.
pub fn render(
    artifact: &CodeArtifact,
    renderer: &dyn RendererBackend,
    limits: &RenderLimits,
) -> Result<RenderOutput, RenderError> {
    if artifact.source().trim().is_empty() {
        return Err(RenderError::EmptySource);
    }
    let mut out = renderer.render(artifact, limits)?;
    let pixels = out.image.pixel_count() as u64;
    if pixels > limits.max_output_pixels {
        return Err(RenderError::TooLarge {
            pixels,
            max: limits.max_output_pixels,
        });
    }
    let (w, h) = (f64::from(out.image.width()), f64::from(out.image.height()));
    let known: std::collections::HashSet<String> = artifact
        .extracted_labels()
        .iter()
        .map(|l| normalize_label(l))
        .collect();
    out.regions.retain_mut(|r| {
        if !known.contains(&normalize_label(&r.text)) {
            log::warn!("{}: dropping region {:?}, not an extracted label", renderer.name(), r.text);
            return false;
        }
        let x0 = r.bbox.x.clamp(0.0, w);
        let y0 = r.bbox.y.clamp(0.0, h);
        let x1 = r.bbox.right().clamp(0.0, w);
        let y1 = r.bbox.bottom().clamp(0.0, h);
        r.bbox = BBox::new(x0, y0, x1 - x0, y1 - y0);
        if r.bbox.width <= 0.0 || r.bbox.height <= 0.0 {
            log::warn!("{}: dropping empty region {:?}", renderer.name(), r.text);
            return false;
        }
        true
    });
    Ok(out)
}
