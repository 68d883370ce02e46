//! wasm-bindgen surface for the static demo in `www/`.
//!
//! Three operations: the Canny cage of a mock diagram, stylization with and
//! without label compositing, and the classroom cost model. Everything runs
//! on the deterministic mock backends so the page needs no server.

use std::fmt::Display;
use std::str::FromStr;

use cage_core::backends::mock::{GlyphLabelRenderer, GlyphOcr, LayoutRenderer, RecolorDiffusion};
use cage_core::imaging::{canny, CannyParams, CompositeMode, RasterImage, RegionMask};
use cage_core::metrics::{effective_cost, lem, CostScenario, OcrBackend, RetryModel};
use cage_core::refine::{stylize_with_labels, LabelRenderer, RefineConfig, StyleSpec};
use cage_core::synth::RenderOutput;
use rust_decimal::Decimal;
use wasm_bindgen::prelude::*;

const MAX_LABELS: usize = 16;
const EDGE_RGB: [u8; 3] = [255, 80, 40];

fn js(e: impl Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(img: &RasterImage) -> Vec<u8> {
    img.as_bytes().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Dims the image and paints the set pixels of `mask` on top.
fn overlay(img: &RasterImage, mask: &[bool], rgb: [u8; 3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixel_count() * 4);
    for (i, p) in img.as_bytes().chunks_exact(3).enumerate() {
        if mask[i] {
            out.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
        } else {
            out.extend(p.iter().map(|c| 150 + c / 3));
            out.push(255);
        }
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<String>, String> {
    let labels: Vec<String> = text
        .split([',', '\n'])
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if labels.is_empty() {
        return Err("enter at least one label".into());
    }
    if labels.len() > MAX_LABELS {
        return Err(format!("at most {MAX_LABELS} labels"));
    }
    if let Some(l) = labels.iter().find(|l| l.len() > 40) {
        return Err(format!("label {l:?} is longer than 40 bytes"));
    }
    Ok(labels)
}

fn labels_read(ocr: &GlyphOcr, labels: &[String], img: &RasterImage) -> Result<usize, String> {
    let result = ocr.recognize(img).map_err(|e| e.to_string())?;
    Ok((lem(labels, &result) * labels.len() as f64).round() as usize)
}

/// A programmatic rendering of a label list.
#[wasm_bindgen]
pub struct Diagram {
    labels: Vec<String>,
    prog: RenderOutput,
}

impl Diagram {
    pub fn build(labels: &str) -> Result<Self, String> {
        let labels = parse_labels(labels)?;
        let (image, regions, structure) = LayoutRenderer::default().draw(&labels);
        Ok(Self {
            labels,
            prog: RenderOutput {
                image,
                regions,
                structure: Some(structure),
                stdout: String::new(),
                stderr: String::new(),
                wall_time_ms: 0,
            },
        })
    }

    pub fn edge_map(&self, sigma: f64, low: f64, high: f64) -> Result<EdgeView, String> {
        let edges = canny(&self.prog.image, &CannyParams { sigma, low, high }).map_err(|e| e.to_string())?;
        Ok(EdgeView {
            rgba: overlay(&self.prog.image, edges.bits(), EDGE_RGB),
            count: edges.count() as u32,
            density: edges.count() as f64 / self.prog.image.pixel_count() as f64,
        })
    }

    /// `mode` is `pixel-copy`, `feathered` or `redraw`.
    pub fn restyle(&self, strength: f64, seed: u64, padding: u32, mode: &str) -> Result<StyleView, String> {
        let style = StyleSpec::new("demo", strength, seed).map_err(|e| e.to_string())?;
        let redraw = GlyphLabelRenderer { padding };
        let (composite, labels) = match mode {
            "pixel-copy" => (CompositeMode::PixelCopy, None),
            "feathered" => (CompositeMode::Feathered, None),
            "redraw" => (CompositeMode::PixelCopy, Some(&redraw as &dyn LabelRenderer)),
            other => return Err(format!("unknown mode {other:?}")),
        };
        let cfg = RefineConfig {
            mask_padding: padding,
            composite,
            ..RefineConfig::default()
        };
        let s = stylize_with_labels(&self.prog, &style, &RecolorDiffusion::default(), labels, &cfg)
            .map_err(|e| e.to_string())?;
        let mask: &RegionMask = &s.request.preservation_mask;
        let intact = mask.set_pixels().all(|(x, y)| s.refined.get(x, y) == self.prog.image.get(x, y));
        let ocr = GlyphOcr;
        Ok(StyleView {
            raw: rgba(&s.raw),
            refined: rgba(&s.refined),
            mask: overlay(&self.prog.image, mask.bits(), [40, 120, 255]),
            total: self.labels.len() as u32,
            raw_read: labels_read(&ocr, &self.labels, &s.raw)? as u32,
            refined_read: labels_read(&ocr, &self.labels, &s.refined)? as u32,
            masked_pixels: mask.count() as u32,
            masked_intact: intact,
        })
    }
}

#[wasm_bindgen]
impl Diagram {
    /// Labels separated by commas or newlines.
    #[wasm_bindgen(constructor)]
    pub fn new(labels: &str) -> Result<Diagram, JsError> {
        Self::build(labels).map_err(js)
    }

    pub fn width(&self) -> u32 {
        self.prog.image.width()
    }

    pub fn height(&self) -> u32 {
        self.prog.image.height()
    }

    pub fn rgba(&self) -> Vec<u8> {
        rgba(&self.prog.image)
    }

    pub fn edges(&self, sigma: f64, low: f64, high: f64) -> Result<EdgeView, JsError> {
        self.edge_map(sigma, low, high).map_err(js)
    }

    pub fn stylize(&self, strength: f64, seed: u32, padding: u32, mode: &str) -> Result<StyleView, JsError> {
        self.restyle(strength, u64::from(seed), padding, mode).map_err(js)
    }
}

#[wasm_bindgen]
pub struct EdgeView {
    rgba: Vec<u8>,
    count: u32,
    density: f64,
}

#[wasm_bindgen]
impl EdgeView {
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn density(&self) -> f64 {
        self.density
    }
}

#[wasm_bindgen]
pub struct StyleView {
    raw: Vec<u8>,
    refined: Vec<u8>,
    mask: Vec<u8>,
    total: u32,
    raw_read: u32,
    refined_read: u32,
    masked_pixels: u32,
    masked_intact: bool,
}

#[wasm_bindgen]
impl StyleView {
    /// Backend output before compositing.
    pub fn raw(&self) -> Vec<u8> {
        self.raw.clone()
    }

    pub fn refined(&self) -> Vec<u8> {
        self.refined.clone()
    }

    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn raw_read(&self) -> u32 {
        self.raw_read
    }

    pub fn refined_read(&self) -> u32 {
        self.refined_read
    }

    pub fn masked_pixels(&self) -> u32 {
        self.masked_pixels
    }

    pub fn masked_intact(&self) -> bool {
        self.masked_intact
    }
}

#[wasm_bindgen]
pub struct CostView {
    multiplier: String,
    per_image_eff: String,
    per_deck: String,
    per_teacher_year: String,
    per_school_year: String,
}

#[wasm_bindgen]
impl CostView {
    pub fn multiplier(&self) -> String {
        self.multiplier.clone()
    }

    pub fn per_image_eff(&self) -> String {
        self.per_image_eff.clone()
    }

    pub fn per_deck(&self) -> String {
        self.per_deck.clone()
    }

    pub fn per_teacher_year(&self) -> String {
        self.per_teacher_year.clone()
    }

    pub fn per_school_year(&self) -> String {
        self.per_school_year.clone()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cost_breakdown(
    per_image: &str,
    regen_rate: &str,
    geometric: bool,
    diagrams_per_deck: u32,
    decks_per_week: u32,
    weeks_per_year: u32,
    teachers: u32,
) -> Result<CostView, String> {
    let dec = |s: &str, what: &str| Decimal::from_str(s.trim()).map_err(|_| format!("{what}: not a number: {s:?}"));
    let scenario = CostScenario {
        diagrams_per_deck,
        decks_per_week,
        weeks_per_year,
        teachers,
        ..CostScenario::classroom("demo", dec(per_image, "price per image")?)
    }
    .with_regen(
        dec(regen_rate, "regeneration rate")?,
        if geometric { RetryModel::Geometric } else { RetryModel::SingleRetry },
    );
    let b = effective_cost(&scenario).map_err(|e| e.to_string())?;
    let money = |d: Decimal| d.round_dp(2).to_string();
    Ok(CostView {
        multiplier: b.multiplier.round_dp(4).normalize().to_string(),
        per_image_eff: b.per_image_eff.round_dp(4).normalize().to_string(),
        per_deck: money(b.per_deck),
        per_teacher_year: money(b.per_teacher_year),
        per_school_year: money(b.per_school_year),
    })
}

/// Decimal strings keep the arithmetic exact; JS numbers would not.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn cost(
    per_image: &str,
    regen_rate: &str,
    geometric: bool,
    diagrams_per_deck: u32,
    decks_per_week: u32,
    weeks_per_year: u32,
    teachers: u32,
) -> Result<CostView, JsError> {
    cost_breakdown(per_image, regen_rate, geometric, diagrams_per_deck, decks_per_week, weeks_per_year, teachers)
        .map_err(js)
}
