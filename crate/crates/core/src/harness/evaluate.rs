use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::run::{RunRecord, PROG_IMAGE, REFINED_IMAGE};
use super::HarnessError;
use crate::benchmark::Subject;
use crate::imaging::RasterImage;
use crate::metrics::{
    cer_breakdown, fid, missing_from_ocr, CerMatching, CostScenario, EmbedderBackend, FeatureSet,
    OcrBackend,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    OpenSourceDiffusion,
    CodeBased,
    ClosedSourceApi,
    Cage,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::OpenSourceDiffusion => "Open-src. diffusion",
            Paradigm::CodeBased => "Code-based (LLM→code)",
            Paradigm::ClosedSourceApi => "Closed-src. APIs",
            Paradigm::Cage => "Ours",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSource {
    /// The recomposed stage-2 output.
    #[default]
    Refined,
    /// The stage-1 rendering, evaluated as a code-based baseline.
    Programmatic,
}

impl ImageSource {
    pub fn file_name(self) -> &'static str {
        match self {
            ImageSource::Refined => REFINED_IMAGE,
            ImageSource::Programmatic => PROG_IMAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectBreakdown {
    pub images: usize,
    pub lem: Option<f64>,
    pub cer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub prompt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub source: ImageSource,
    pub ocr: String,
    pub embedder: Option<String>,
    pub reference_images: usize,
}

/// One row of an accuracy or cost table. Percentages are in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub paradigm: Paradigm,
    pub model: String,
    pub lem: Option<f64>,
    pub cer: Option<f64>,
    pub fid: Option<f64>,
    pub hva: Option<f64>,
    #[serde(default)]
    pub cost_per_image: Decimal,
    /// Footnote attached to the cost cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_note: Option<String>,
    /// Deployment scenario, for cost tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_scenario: Option<CostScenario>,
    #[serde(default)]
    pub images: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_subject: BTreeMap<Subject, SubjectBreakdown>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ImageFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl MetricReport {
    pub fn new(paradigm: Paradigm, model: impl Into<String>) -> Self {
        Self {
            paradigm,
            model: model.into(),
            lem: None,
            cer: None,
            fid: None,
            hva: None,
            cost_per_image: Decimal::ZERO,
            cost_note: None,
            cost_scenario: None,
            images: 0,
            per_subject: BTreeMap::new(),
            failures: Vec::new(),
            provenance: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub source: ImageSource,
    pub paradigm: Paradigm,
    /// Defaults to the run's config label.
    pub model: Option<String>,
    pub matching: CerMatching,
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            source: ImageSource::Refined,
            paradigm: Paradigm::Cage,
            model: None,
            matching: CerMatching::Independent,
            jobs: 1,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    images: usize,
    labels: usize,
    found: usize,
    distance: usize,
    chars: usize,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.images += o.images;
        self.labels += o.labels;
        self.found += o.found;
        self.distance += o.distance;
        self.chars += o.chars;
    }

    fn lem(&self) -> Option<f64> {
        (self.labels > 0).then(|| 100.0 * self.found as f64 / self.labels as f64)
    }

    fn cer(&self) -> Option<f64> {
        (self.chars > 0).then(|| 100.0 * self.distance as f64 / self.chars as f64)
    }
}

struct ImageResult {
    tally: Tally,
    features: Option<Vec<f64>>,
}

/// LEM and CER pooled over all labels of all successful prompts, per
/// subject and overall, plus FID against `reference` when both sides have
/// at least two images. Per-image failures are listed, not fatal.
pub fn evaluate_run(
    run_dir: &Path,
    run: &RunRecord,
    reference: Option<&[RasterImage]>,
    ocr: &dyn OcrBackend,
    embedder: Option<&dyn EmbedderBackend>,
    opts: &EvalOptions,
) -> Result<MetricReport, HarnessError> {
    let items: Vec<_> = run.succeeded().collect();
    if items.is_empty() {
        return Err(HarnessError::NoSuccessfulPrompts);
    }
    let items = &items;
    let eval_one = |i: usize| -> Result<ImageResult, String> {
        let p = items[i];
        let path = run_dir.join(&p.dir).join(opts.source.file_name());
        let image = RasterImage::read_png(&path).map_err(|e| e.to_string())?;
        let text = ocr.recognize(&image).map_err(|e| e.to_string())?;
        let labels = &p.prompt.labels;
        let cer = cer_breakdown(labels, &text, opts.matching);
        let features = match embedder {
            Some(e) => Some(e.embed(&image).map_err(|e| e.to_string())?),
            None => None,
        };
        Ok(ImageResult {
            tally: Tally {
                images: 1,
                labels: labels.len(),
                found: labels.len() - missing_from_ocr(labels, &text).len(),
                distance: cer.total_distance(),
                chars: cer.total_chars(),
            },
            features,
        })
    };

    let mut results: Vec<Option<Result<ImageResult, String>>> = (0..items.len()).map(|_| None).collect();
    let jobs = opts.jobs.clamp(1, items.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let eval_one = &eval_one;
                scope.spawn(move || {
                    (w..items.len())
                        .step_by(jobs)
                        .map(|i| (i, eval_one(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let mut report = MetricReport::new(opts.paradigm, opts.model.clone().unwrap_or_else(|| run.config.label.clone()));
    let mut total = Tally::default();
    let mut by_subject: BTreeMap<Subject, Tally> = BTreeMap::new();
    let mut features = Vec::new();
    for (p, r) in items.iter().zip(results) {
        match r.expect("every image evaluated") {
            Ok(r) => {
                total.add(&r.tally);
                by_subject.entry(p.prompt.subject).or_default().add(&r.tally);
                features.extend(r.features);
            }
            Err(message) => report.failures.push(ImageFailure {
                prompt_id: p.prompt.id.clone(),
                message,
            }),
        }
    }
    report.images = total.images;
    report.lem = total.lem();
    report.cer = total.cer();
    report.per_subject = by_subject
        .into_iter()
        .map(|(s, t)| {
            (
                s,
                SubjectBreakdown {
                    images: t.images,
                    lem: t.lem(),
                    cer: t.cer(),
                },
            )
        })
        .collect();

    let reference_features = match (embedder, reference) {
        (Some(e), Some(images)) => {
            let mut v = Vec::with_capacity(images.len());
            for img in images {
                v.push(e.embed(img)?);
            }
            v
        }
        _ => Vec::new(),
    };
    report.fid = if embedder.is_none() || reference.is_none() {
        None
    } else if features.len() < 2 || reference_features.len() < 2 {
        log::warn!(
            "skipping FID: {} generated and {} reference images, need at least 2 each",
            features.len(),
            reference_features.len()
        );
        None
    } else {
        let a = FeatureSet::new(&features)?;
        let b = FeatureSet::new(&reference_features)?;
        Some(fid(&a, &b)?)
    };
    report.provenance = Some(Provenance {
        run_id: run.run_id.clone(),
        source: opts.source,
        ocr: ocr.name().to_string(),
        embedder: embedder.map(|e| e.name().to_string()),
        reference_images: reference.map_or(0, <[RasterImage]>::len),
    });
    Ok(report)
}
