//! Stage 1: code synthesis, label verification, sandboxed rendering and the
//! repair loop.

mod extract;
mod prompt;
mod render;
mod repair;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::BackendError;

pub use extract::{extract_label_calls, ExtractError};
pub use prompt::{
    build_codegen_prompt, build_language_prompt, parse_language_choice, parse_required_labels, strip_code_fences,
    LABELS_MARKER, LANGUAGE_TASK,
};
pub use render::{
    render, RenderError, RenderLimits, RenderOutput, RendererBackend, StructureGraph, TextRegion,
    REGIONS_FILE, STRUCTURE_FILE,
};
pub use repair::{synthesize_with_repair, AttemptRecord, RepairOptions, SynthError, SynthesisOutcome};
pub use verify::{check_structure, verify_code, StructureCheck, StructureStatus, VerificationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderLanguage {
    PythonMatplotlib,
    LatexTikz,
    Svg,
}

impl RenderLanguage {
    pub const ALL: [RenderLanguage; 3] = [
        RenderLanguage::PythonMatplotlib,
        RenderLanguage::LatexTikz,
        RenderLanguage::Svg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RenderLanguage::PythonMatplotlib => "python-matplotlib",
            RenderLanguage::LatexTikz => "latex-tikz",
            RenderLanguage::Svg => "svg",
        }
    }

    pub fn file_extension(self) -> &'static str {
        match self {
            RenderLanguage::PythonMatplotlib => "py",
            RenderLanguage::LatexTikz => "tex",
            RenderLanguage::Svg => "svg",
        }
    }

    /// The construct generated code must use for every label.
    pub fn label_construct(self) -> &'static str {
        match self {
            RenderLanguage::PythonMatplotlib => "ax.text(x, y, \"Label\") or ax.annotate(\"Label\", xy=...)",
            RenderLanguage::LatexTikz => "\\node at (x,y) {Label};",
            RenderLanguage::Svg => "<text x=\"..\" y=\"..\">Label</text>",
        }
    }
}

impl fmt::Display for RenderLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        RenderLanguage::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .or(match s.as_str() {
                "python" | "matplotlib" => Some(RenderLanguage::PythonMatplotlib),
                "tikz" | "latex" => Some(RenderLanguage::LatexTikz),
                _ => None,
            })
            .ok_or_else(|| format!("unknown rendering language {s:?}"))
    }
}

/// Generated source plus the labels its drawing calls carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeArtifact {
    language: RenderLanguage,
    source: String,
    extracted_labels: Vec<String>,
    attempt_index: u32,
}

impl CodeArtifact {
    pub fn new(
        language: RenderLanguage,
        source: impl Into<String>,
        attempt_index: u32,
    ) -> Result<Self, ExtractError> {
        let source = source.into();
        let extracted_labels = extract_label_calls(&source, language)?;
        Ok(Self {
            language,
            source,
            extracted_labels,
            attempt_index: attempt_index.max(1),
        })
    }

    pub fn language(&self) -> RenderLanguage {
        self.language
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn extracted_labels(&self) -> &[String] {
        &self.extracted_labels
    }

    pub fn attempt_index(&self) -> u32 {
        self.attempt_index
    }
}

/// Client for the code-writing language model.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Returns program source for the instruction. Markdown code fences, if
    /// present, are stripped by the caller.
    fn generate(&self, instruction: &str) -> Result<String, BackendError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_names_roundtrip() {
        for l in RenderLanguage::ALL {
            assert_eq!(l.as_str().parse::<RenderLanguage>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
        }
        assert_eq!("TikZ".parse::<RenderLanguage>().unwrap(), RenderLanguage::LatexTikz);
        assert!("mermaid".parse::<RenderLanguage>().is_err());
    }

    #[test]
    fn artifact_extracts_on_construction() {
        let a = CodeArtifact::new(RenderLanguage::Svg, "<svg><text>Aorta</text></svg>", 1).unwrap();
        assert_eq!(a.extracted_labels(), ["Aorta"]);
        assert!(CodeArtifact::new(RenderLanguage::Svg, "<svg><text>Aorta</svg>", 1).is_err());
    }
}
