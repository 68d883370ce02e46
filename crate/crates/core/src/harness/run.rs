//! Pipeline runs and their on-disk layout:
//!
//! ```text
//! <run>/config.json  run.json  report.md
//! <run>/<prompt>/attempt-<n>/{code.<ext>, prog.png, regions.json, verify.json}
//! <run>/<prompt>/{prog.png, regions.json, structure.json, edges.png, mask.png,
//!                 raw.png, refined.png, metrics.json, status.json}
//! ```
//!
//! Everything under a prompt directory depends only on the prompt, the
//! config and the backends; wall-clock timing lives in `run.json`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Backends, PipelineConfig};
use super::HarnessError;
use crate::benchmark::{validate_manifest, DiagramPrompt};
use crate::geometry::BBox;
use crate::imaging::{EdgeMap, RasterImage, RegionMask};
use crate::metrics::{cer_breakdown, lem, verify_pair, PairVerification};
use crate::refine::{edge_respect, style_prompt_for, stylize_with_labels, StyleSpec, Stylization};
use crate::synth::{
    build_language_prompt, parse_language_choice, synthesize_with_repair, AttemptRecord, RenderLanguage,
    RenderOutput, RepairOptions,
    StructureGraph, SynthError, TextRegion, REGIONS_FILE, STRUCTURE_FILE,
};

pub const CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.md";
pub const STATUS_FILE: &str = "status.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PROG_IMAGE: &str = "prog.png";
pub const REFINED_IMAGE: &str = "refined.png";
pub const RAW_IMAGE: &str = "raw.png";
pub const EDGES_IMAGE: &str = "edges.png";
pub const MASK_IMAGE: &str = "mask.png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStatus {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Synthesis,
    Refinement,
    Verification,
    Storage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt: DiagramPrompt,
    /// Directory name under the run root.
    pub dir: String,
    pub language: RenderLanguage,
    pub seed: u64,
    pub status: PromptStatus,
    pub failed_stage: Option<FailureStage>,
    pub error: Option<String>,
    pub attempts: u32,
    pub style: Option<StyleSpec>,
    /// Automated pair verification of (prog, refined), when OCR is configured.
    pub pair: Option<PairVerification>,
    /// Files written for this prompt, relative to its directory.
    pub files: Vec<String>,
}

impl PromptRecord {
    pub fn succeeded(&self) -> bool {
        self.status == PromptStatus::Succeeded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMetrics {
    pub edge_pixels: usize,
    pub mask_pixels: usize,
    /// Every masked pixel of the refined image equals the programmatic one.
    pub masked_pixels_identical: bool,
    /// Share of programmatic edges that survive refinement.
    pub edge_respect: Option<f64>,
    pub lem: Option<f64>,
    pub cer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub llm: String,
    pub renderer: String,
    pub diffusion: String,
    pub ocr: Option<String>,
    pub embedder: Option<String>,
}

impl BackendIdentity {
    pub fn of(b: &Backends) -> Self {
        Self {
            llm: b.llm.name().to_string(),
            renderer: b.renderer.name().to_string(),
            diffusion: b.diffusion.name().to_string(),
            ocr: b.ocr.as_ref().map(|o| o.name().to_string()),
            embedder: b.embedder.as_ref().map(|e| e.name().to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTiming {
    pub total_ms: u64,
    pub prompt_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: PipelineConfig,
    pub backends: BackendIdentity,
    /// Sorted by prompt id.
    pub prompts: Vec<PromptRecord>,
    pub timing: RunTiming,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self, HarnessError> {
        read_json(&run_dir.join(RUN_FILE))
    }

    pub fn succeeded(&self) -> impl Iterator<Item = &PromptRecord> {
        self.prompts.iter().filter(|p| p.succeeded())
    }

    pub fn failed(&self) -> impl Iterator<Item = &PromptRecord> {
        self.prompts.iter().filter(|p| !p.succeeded())
    }

    pub fn find(&self, prompt_id: &str) -> Option<&PromptRecord> {
        self.prompts.iter().find(|p| p.prompt.id == prompt_id)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File-system safe directory name for a prompt id.
pub fn prompt_dir_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect::<String>()
        .trim_start_matches('.')
        .to_string()
}

/// Seed for one prompt, independent of scheduling order.
pub fn prompt_seed(run_seed: u64, prompt_id: &str) -> u64 {
    let digest = Sha256::digest(format!("{run_seed}:{prompt_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Loads the persisted programmatic rendering of a prompt.
pub fn load_prog(prompt_dir: &Path) -> Result<RenderOutput, HarnessError> {
    let image = RasterImage::read_png(&prompt_dir.join(PROG_IMAGE))?;
    let regions: Vec<TextRegion> = read_json(&prompt_dir.join(REGIONS_FILE))?;
    let structure_path = prompt_dir.join(STRUCTURE_FILE);
    let structure: Option<StructureGraph> = if structure_path.exists() {
        Some(read_json(&structure_path)?)
    } else {
        None
    };
    Ok(RenderOutput {
        image,
        regions,
        structure,
        stdout: String::new(),
        stderr: String::new(),
        wall_time_ms: 0,
    })
}

struct PromptWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl PromptWriter {
    fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_bytes(&path, bytes)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Json {
            path: self.dir.join(rel),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.bytes(rel, text.as_bytes())
    }

    fn png(&mut self, rel: &str, image: &RasterImage) -> Result<(), HarnessError> {
        self.bytes(rel, &image.encode_png())
    }

    fn attempts(&mut self, attempts: &[AttemptRecord]) -> Result<(), HarnessError> {
        for a in attempts {
            let base = format!("attempt-{}", a.attempt);
            self.bytes(&format!("{base}/code.{}", a.language.file_extension()), a.source.as_bytes())?;
            if let Some(render) = &a.render {
                self.png(&format!("{base}/{PROG_IMAGE}"), &render.image)?;
                self.json(&format!("{base}/{REGIONS_FILE}"), &render.regions)?;
            }
            self.json(&format!("{base}/verify.json"), &a.verification)?;
        }
        Ok(())
    }
}

fn masked_identical(prog: &RasterImage, refined: &RasterImage, mask: &RegionMask) -> bool {
    prog.dimensions() == refined.dimensions()
        && mask.set_pixels().all(|(x, y)| prog.get(x, y) == refined.get(x, y))
}

struct Outcome {
    attempts: u32,
    style: Option<StyleSpec>,
    pair: Option<PairVerification>,
    failure: Option<(FailureStage, String)>,
}

fn run_prompt(
    prompt: &DiagramPrompt,
    backends: &Backends,
    cfg: &PipelineConfig,
    language: RenderLanguage,
    seed: u64,
    w: &mut PromptWriter,
) -> Result<Outcome, HarnessError> {
    let mut options = RepairOptions::new(language);
    options.max_attempts = cfg.max_attempts;
    options.limits = cfg.limits;
    let synth = synthesize_with_repair(prompt, backends.llm.as_ref(), backends.renderer.as_ref(), &options);
    let outcome = match synth {
        Ok(outcome) => outcome,
        Err(e) => {
            w.attempts(e.attempts())?;
            let attempts = e.attempts().len() as u32;
            let message = match &e {
                SynthError::Exhausted { .. } => format!("exhausted: {e}"),
                _ => e.to_string(),
            };
            return Ok(Outcome {
                attempts,
                style: None,
                pair: None,
                failure: Some((FailureStage::Synthesis, message)),
            });
        }
    };
    w.attempts(&outcome.attempts)?;
    let attempts = outcome.attempts.len() as u32;
    let prog = &outcome.render;
    w.png(PROG_IMAGE, &prog.image)?;
    w.json(REGIONS_FILE, &prog.regions)?;
    if let Some(structure) = &prog.structure {
        w.json(STRUCTURE_FILE, structure)?;
    }

    let style_prompt = style_prompt_for(prompt.grade_band, prompt.subject, cfg.style.prompt.as_deref());
    let refined = StyleSpec::new(style_prompt, cfg.style.strength, seed)
        .and_then(|style| {
            let labels = backends.labels.as_deref();
            stylize_with_labels(prog, &style, backends.diffusion.as_ref(), labels, &cfg.refine)
        });
    let Stylization { request, raw, refined } = match refined {
        Ok(s) => s,
        Err(e) => {
            return Ok(Outcome {
                attempts,
                style: None,
                pair: None,
                failure: Some((FailureStage::Refinement, e.to_string())),
            })
        }
    };
    let style = request.style.clone();
    w.bytes(EDGES_IMAGE, &request.edge_map.encode_png())?;
    w.bytes(MASK_IMAGE, &request.preservation_mask.encode_png())?;
    w.png(RAW_IMAGE, &raw)?;
    w.png(REFINED_IMAGE, &refined)?;

    let mut metrics = PromptMetrics {
        edge_pixels: request.edge_map.count(),
        mask_pixels: request.preservation_mask.count(),
        masked_pixels_identical: masked_identical(&prog.image, &refined, &request.preservation_mask),
        edge_respect: edge_respect(&request.edge_map, &refined, &cfg.refine.canny)?,
        lem: None,
        cer: None,
    };
    let mut pair = None;
    let mut failure = None;
    if let Some(ocr) = &backends.ocr {
        let checked = ocr.recognize(&refined).and_then(|text| {
            metrics.lem = Some(lem(&prompt.labels, &text));
            metrics.cer = Some(cer_breakdown(&prompt.labels, &text, cfg.cer_matching).value());
            verify_pair(prog, &refined, ocr.as_ref(), cfg.iou_threshold)
        });
        match checked {
            Ok(v) => pair = Some(v),
            Err(e) => failure = Some((FailureStage::Verification, e.to_string())),
        }
    }
    w.json(METRICS_FILE, &metrics)?;
    Ok(Outcome {
        attempts,
        style: Some(style),
        pair,
        failure,
    })
}

/// The configured language, or the LLM's pick when the policy asks for one.
/// An unusable reply falls back to the subject mapping.
fn choose_language(prompt: &DiagramPrompt, backends: &Backends, cfg: &PipelineConfig) -> RenderLanguage {
    let policy = &cfg.language;
    let fallback = policy.language_for(prompt.subject);
    if policy.fixed.is_some() || !policy.ask_llm {
        return fallback;
    }
    match backends.llm.generate(&build_language_prompt(prompt)) {
        Ok(reply) => parse_language_choice(&reply).unwrap_or_else(|| {
            log::warn!("{}: language reply {reply:?} names no known language; using {fallback}", prompt.id);
            fallback
        }),
        Err(e) => {
            log::warn!("{}: language choice failed ({e}); using {fallback}", prompt.id);
            fallback
        }
    }
}

fn process(
    prompt: &DiagramPrompt,
    backends: &Backends,
    cfg: &PipelineConfig,
    run_dir: &Path,
) -> PromptRecord {
    let dir = prompt_dir_name(&prompt.id);
    let language = choose_language(prompt, backends, cfg);
    let seed = prompt_seed(cfg.seed, &prompt.id);
    let mut w = PromptWriter {
        dir: run_dir.join(&dir),
        files: Vec::new(),
    };
    let outcome = create_dir(&w.dir).and_then(|_| run_prompt(prompt, backends, cfg, language, seed, &mut w));
    let (attempts, style, pair, failure) = match outcome {
        Ok(o) => (o.attempts, o.style, o.pair, o.failure),
        Err(e) => (0, None, None, Some((FailureStage::Storage, e.to_string()))),
    };
    let mut files = w.files.clone();
    files.push(STATUS_FILE.to_string());
    files.sort();
    let record = PromptRecord {
        prompt: prompt.clone(),
        dir,
        language,
        seed,
        status: if failure.is_none() { PromptStatus::Succeeded } else { PromptStatus::Failed },
        failed_stage: failure.as_ref().map(|f| f.0),
        error: failure.map(|f| f.1),
        attempts,
        style,
        pair,
        files,
    };
    if let Some(err) = &record.error {
        log::warn!("{}: {err}", prompt.id);
    }
    if let Err(e) = w.json(STATUS_FILE, &record) {
        log::error!("{}: cannot write status: {e}", prompt.id);
    }
    record
}

/// Runs both stages for every prompt with `cfg.jobs` workers. A failing
/// prompt is recorded and the run continues. `run_dir` must not exist yet
/// or be empty; its file name becomes the run id.
pub fn run_pipeline(
    prompts: &[DiagramPrompt],
    backends: &Backends,
    cfg: &PipelineConfig,
    run_dir: &Path,
) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let validation = validate_manifest(prompts, None);
    if !validation.pass {
        return Err(HarnessError::Manifest(format!(
            "{} prompts, duplicate ids {:?}, empty labels {:?}, duplicate labels {}",
            validation.total,
            validation.duplicate_ids,
            validation.empty_labels,
            validation.duplicate_labels.len()
        )));
    }
    let mut dirs = HashSet::new();
    for p in prompts {
        let d = prompt_dir_name(&p.id);
        if d.is_empty() || !dirs.insert(d) {
            return Err(HarnessError::Manifest(format!(
                "prompt id {:?} does not map to a unique directory name",
                p.id
            )));
        }
    }
    if run_dir.exists()
        && std::fs::read_dir(run_dir)
            .map(|mut d| d.next().is_some())
            .unwrap_or(true)
    {
        return Err(HarnessError::RunExists(run_dir.to_path_buf()));
    }
    create_dir(run_dir)?;
    let run_id = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    write_json(&run_dir.join(CONFIG_FILE), cfg)?;

    let mut order: Vec<&DiagramPrompt> = prompts.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, PromptRecord, u64)>();
    let mut slots: Vec<Option<PromptRecord>> = vec![None; order.len()];
    let mut timing = RunTiming::default();
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(order.len()).max(1) {
            let tx = tx.clone();
            let (next, order) = (&next, &order);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(prompt) = order.get(i) else { break };
                let t = Instant::now();
                let record = process(prompt, backends, cfg, run_dir);
                if tx.send((i, record, t.elapsed().as_millis() as u64)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, record, ms) in rx {
            log::info!("{}: {:?}", record.prompt.id, record.status);
            timing.prompt_ms.insert(record.prompt.id.clone(), ms);
            slots[i] = Some(record);
        }
    });
    timing.total_ms = start.elapsed().as_millis() as u64;
    let record = RunRecord {
        run_id,
        config: cfg.clone(),
        backends: BackendIdentity::of(backends),
        prompts: slots.into_iter().map(|s| s.expect("every prompt reports")).collect(),
        timing,
    };
    write_json(&run_dir.join(RUN_FILE), &record)?;
    Ok(record)
}

/// Re-stylizes a finished prompt from its persisted programmatic rendering,
/// as done for rejected review candidates.
pub fn restylize(
    prompt_dir: &Path,
    record: &PromptRecord,
    strength: f64,
    backends: &Backends,
    cfg: &PipelineConfig,
) -> Result<(Stylization, Option<PairVerification>), HarnessError> {
    let prog = load_prog(prompt_dir)?;
    let prompt_text = style_prompt_for(record.prompt.grade_band, record.prompt.subject, cfg.style.prompt.as_deref());
    let style = StyleSpec::new(prompt_text, strength, record.seed)?;
    let labels = backends.labels.as_deref();
    let s = stylize_with_labels(&prog, &style, backends.diffusion.as_ref(), labels, &cfg.refine)?;
    let pair = match &backends.ocr {
        Some(ocr) => Some(verify_pair(&prog, &s.refined, ocr.as_ref(), cfg.iou_threshold)?),
        None => None,
    };
    Ok((s, pair))
}

/// Reads back the edge map and mask written for a prompt.
pub fn load_masks(prompt_dir: &Path) -> Result<(EdgeMap, RegionMask), HarnessError> {
    let read = |name: &str| {
        let path = prompt_dir.join(name);
        std::fs::read(&path).map_err(|source| HarnessError::Io { path, source })
    };
    Ok((
        EdgeMap::decode_png(&read(EDGES_IMAGE)?)?,
        RegionMask::decode_png(&read(MASK_IMAGE)?)?,
    ))
}

/// Label boxes of a prompt's programmatic rendering.
pub fn load_regions(prompt_dir: &Path) -> Result<Vec<(String, BBox)>, HarnessError> {
    let regions: Vec<TextRegion> = read_json(&prompt_dir.join(REGIONS_FILE))?;
    Ok(regions.into_iter().map(|r| (r.text, r.bbox)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_names() {
        assert_eq!(prompt_dir_name("bio-001"), "bio-001");
        assert_eq!(prompt_dir_name("a/b c"), "a_b_c");
        assert_eq!(prompt_dir_name("../x"), "_x");
    }

    #[test]
    fn seeds_depend_on_id_and_run_seed() {
        assert_eq!(prompt_seed(1, "a"), prompt_seed(1, "a"));
        assert_ne!(prompt_seed(1, "a"), prompt_seed(1, "b"));
        assert_ne!(prompt_seed(1, "a"), prompt_seed(2, "a"));
    }
}
