use super::{
    build_codegen_prompt, render, strip_code_fences, verify::missing_labels, verify_code,
    CodeArtifact, LlmBackend, RenderLanguage, RenderLimits, RenderOutput, RendererBackend,
    StructureStatus, VerificationResult,
};
use crate::backends::BackendError;
use crate::benchmark::DiagramPrompt;

#[derive(Debug, Clone, Copy)]
pub struct RepairOptions {
    pub language: RenderLanguage,
    pub max_attempts: u32,
    pub limits: RenderLimits,
}

impl RepairOptions {
    pub fn new(language: RenderLanguage) -> Self {
        Self {
            language,
            max_attempts: 3,
            limits: RenderLimits::default(),
        }
    }
}

/// Everything produced by one generation attempt.
#[derive(Debug, Clone)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub language: RenderLanguage,
    /// Source as returned by the model, fences removed.
    pub source: String,
    /// `None` when label extraction failed on the source.
    pub artifact: Option<CodeArtifact>,
    pub render: Option<RenderOutput>,
    pub verification: VerificationResult,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub artifact: CodeArtifact,
    pub render: RenderOutput,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("max_attempts must be at least 1")]
    InvalidMaxAttempts,
    #[error("verification still failing after {} attempt(s): {}", .attempts.len(), .last.failed_checks().join(", "))]
    Exhausted {
        attempts: Vec<AttemptRecord>,
        last: VerificationResult,
    },
    #[error("attempt {attempt}: {source}")]
    Backend {
        attempt: u32,
        attempts: Vec<AttemptRecord>,
        #[source]
        source: BackendError,
    },
}

impl SynthError {
    /// Attempts made before the error, for persistence.
    pub fn attempts(&self) -> &[AttemptRecord] {
        match self {
            SynthError::InvalidMaxAttempts => &[],
            SynthError::Exhausted { attempts, .. } | SynthError::Backend { attempts, .. } => attempts,
        }
    }
}

/// Generates, executes and verifies code until all checks pass or the
/// attempt budget runs out. Each retry carries the previous verification
/// result back to the model.
pub fn synthesize_with_repair(
    prompt: &DiagramPrompt,
    llm: &dyn LlmBackend,
    renderer: &dyn RendererBackend,
    opts: &RepairOptions,
) -> Result<SynthesisOutcome, SynthError> {
    if opts.max_attempts == 0 {
        return Err(SynthError::InvalidMaxAttempts);
    }
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    for attempt in 1..=opts.max_attempts {
        let feedback = attempts.last().map(|a| &a.verification);
        let instruction = build_codegen_prompt(prompt, opts.language, feedback);
        let raw = match llm.generate(&instruction) {
            Ok(raw) => raw,
            Err(source) => {
                return Err(SynthError::Backend {
                    attempt,
                    attempts,
                    source,
                })
            }
        };
        let source = strip_code_fences(&raw).to_string();
        log::debug!("prompt {} attempt {attempt}: {} bytes of source", prompt.id, source.len());

        let record = match CodeArtifact::new(opts.language, source.clone(), attempt) {
            Err(e) => AttemptRecord {
                attempt,
                language: opts.language,
                source,
                artifact: None,
                render: None,
                verification: VerificationResult {
                    labels_ok: false,
                    missing_labels: missing_labels(&prompt.labels, &[]),
                    label_detail: Some(format!("label extraction failed: {e}")),
                    executes_ok: false,
                    execution_error: Some("not executed: source could not be scanned".into()),
                    structure: StructureStatus::Skipped,
                    structure_detail: None,
                },
            },
            Ok(artifact) => {
                let result = render(&artifact, renderer, &opts.limits);
                let verification = verify_code(&artifact, prompt, Some(&result));
                AttemptRecord {
                    attempt,
                    language: opts.language,
                    source,
                    render: result.ok(),
                    artifact: Some(artifact),
                    verification,
                }
            }
        };

        let passed = record.verification.passed();
        attempts.push(record);
        if passed {
            let last = attempts.last().expect("just pushed");
            return Ok(SynthesisOutcome {
                artifact: last.artifact.clone().expect("passing attempt has an artifact"),
                render: last.render.clone().expect("passing attempt rendered"),
                attempts,
            });
        }
        log::info!(
            "prompt {} attempt {attempt} failed: {}",
            prompt.id,
            attempts.last().expect("just pushed").verification.failed_checks().join(", ")
        );
    }
    let last = attempts.last().expect("max_attempts >= 1").verification.clone();
    Err(SynthError::Exhausted { attempts, last })
}
