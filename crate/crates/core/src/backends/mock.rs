//! Deterministic in-process backends for tests, demos and offline runs.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::glyph;
use super::BackendError;
use crate::benchmark::normalize_label;
use crate::imaging::RasterImage;
use crate::metrics::{EmbedderBackend, OcrBackend, OcrResult};
use crate::refine::{DiffusionBackend, LabelRenderer, RefinementRequest};
use crate::synth::{
    parse_required_labels, CodeArtifact, LlmBackend, RenderError, RenderLanguage, RenderLimits,
    RenderOutput, RendererBackend, StructureGraph, TextRegion, LANGUAGE_TASK,
};

/// Source containing this token makes [`LayoutRenderer`] exit non-zero.
pub const FAIL_TOKEN: &str = "cage:fail";

fn instruction_field<'a>(instruction: &'a str, key: &str) -> Option<&'a str> {
    instruction
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .map(str::trim)
}

fn is_repair_prompt(instruction: &str) -> bool {
    instruction.contains("The previous attempt failed these checks:")
}

/// Writes one label-drawing call per required label in the requested
/// language. Labels listed in `omit` are left out of first attempts and
/// restored once the instruction carries repair feedback.
#[derive(Debug, Clone, Default)]
pub struct TemplateLlm {
    omit: BTreeSet<String>,
}

impl TemplateLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn omitting<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            omit: labels.into_iter().map(|l| normalize_label(l.as_ref())).collect(),
        }
    }

    pub fn program(language: RenderLanguage, labels: &[String]) -> String {
        let mut s = String::new();
        match language {
            RenderLanguage::PythonMatplotlib => {
                s.push_str("import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
                s.push_str("fig, ax = plt.subplots(figsize=(6, 4))\nax.axis(\"off\")\n");
                for (i, l) in labels.iter().enumerate() {
                    let lit = serde_json::to_string(l).expect("strings serialize");
                    s.push_str(&format!("ax.text(0.1, {:.2}, {lit})\n", 0.9 - 0.08 * i as f64));
                }
                s.push_str("fig.savefig(OUTPUT)\n");
            }
            RenderLanguage::LatexTikz => {
                s.push_str("\\documentclass[tikz]{standalone}\n\\begin{document}\n\\begin{tikzpicture}\n");
                for (i, l) in labels.iter().enumerate() {
                    s.push_str(&format!("  \\node[draw] (n{i}) at (0,{}) {{{l}}};\n", -(i as i64)));
                }
                for i in 1..labels.len() {
                    s.push_str(&format!("  \\draw (n{}) -- (n{i});\n", i - 1));
                }
                s.push_str("\\end{tikzpicture}\n\\end{document}\n");
            }
            RenderLanguage::Svg => {
                s.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"300\">\n");
                for (i, l) in labels.iter().enumerate() {
                    let esc = l.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
                    s.push_str(&format!("  <text x=\"10\" y=\"{}\">{esc}</text>\n", 20 + 20 * i));
                }
                s.push_str("</svg>\n");
            }
        }
        s
    }
}

impl LlmBackend for TemplateLlm {
    fn name(&self) -> &str {
        "template"
    }

    fn generate(&self, instruction: &str) -> Result<String, BackendError> {
        if instruction.starts_with(LANGUAGE_TASK) {
            let language = match instruction_field(instruction, "Subject:") {
                Some("mathematics") => RenderLanguage::LatexTikz,
                Some("biology") => RenderLanguage::Svg,
                _ => RenderLanguage::PythonMatplotlib,
            };
            return Ok(language.as_str().to_string());
        }
        let labels = parse_required_labels(instruction)
            .ok_or_else(|| BackendError::failed("template", "instruction has no label list"))?;
        let language = instruction_field(instruction, "Rendering language:")
            .and_then(|l| l.parse().ok())
            .unwrap_or(RenderLanguage::PythonMatplotlib);
        let repair = is_repair_prompt(instruction);
        let kept: Vec<String> = labels
            .into_iter()
            .filter(|l| repair || !self.omit.contains(&normalize_label(l)))
            .collect();
        Ok(format!("```\n{}```\n", Self::program(language, &kept)))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Replays fixed responses keyed by prompt id. The n-th call for a prompt
/// gets the n-th response, the last response repeats. Prompts without a
/// script fall back to [`TemplateLlm`].
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    scripts: BTreeMap<String, Vec<String>>,
    calls: std::sync::Mutex<BTreeMap<String, usize>>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(mut self, prompt_id: impl Into<String>, responses: Vec<String>) -> Self {
        self.scripts.insert(prompt_id.into(), responses);
        self
    }
}

impl LlmBackend for ScriptedLlm {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(&self, instruction: &str) -> Result<String, BackendError> {
        let id = instruction_field(instruction, "Prompt id:").unwrap_or_default();
        let Some(responses) = self.scripts.get(id).filter(|r| !r.is_empty()) else {
            return TemplateLlm::new().generate(instruction);
        };
        let mut calls = self.calls.lock().expect("call counter poisoned");
        let n = calls.entry(id.to_string()).or_insert(0);
        let out = responses[(*n).min(responses.len() - 1)].clone();
        *n += 1;
        Ok(out)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Lays out an artifact's extracted labels as a chain of boxes, each label
/// drawn as a glyph strip. Reports exact regions and the chain as its
/// structure graph. Ignores the source otherwise.
#[derive(Debug, Clone)]
pub struct LayoutRenderer {
    pub margin: u32,
}

impl Default for LayoutRenderer {
    fn default() -> Self {
        Self { margin: 16 }
    }
}

const PALETTE: [[u8; 3]; 6] = [
    [198, 226, 255],
    [255, 221, 193],
    [206, 240, 200],
    [255, 240, 170],
    [230, 210, 245],
    [200, 235, 235],
];

impl LayoutRenderer {
    pub fn draw(&self, labels: &[String]) -> (RasterImage, Vec<TextRegion>, StructureGraph) {
        let n = labels.len().max(1);
        let cols = (n as f64).sqrt().ceil() as u32;
        let rows = (n as u32).div_ceil(cols);
        let pad = 8u32;
        let m = self.margin;
        let box_w = labels.iter().map(|l| glyph::glyph_width(l)).max().unwrap_or(0) + 2 * pad;
        let box_h = glyph::GLYPH_HEIGHT + 2 * pad;
        let (cell_w, cell_h) = (box_w + 2 * m, box_h + 2 * m);
        let mut img = RasterImage::filled(cols * cell_w, rows * cell_h, [255, 255, 255]);
        let line = [70, 70, 70];

        // snake order keeps consecutive boxes adjacent
        let slot = |i: usize| {
            let (r, c) = (i as u32 / cols, i as u32 % cols);
            let c = if r % 2 == 1 { cols - 1 - c } else { c };
            (i64::from(c * cell_w + m), i64::from(r * cell_h + m))
        };
        let (bw, bh) = (i64::from(box_w), i64::from(box_h));
        for i in 1..labels.len() {
            let (ax, ay) = slot(i - 1);
            let (bx, by) = slot(i);
            if ay == by {
                let (x0, x1) = (ax.min(bx) + bw, ax.max(bx));
                img.fill_rect(x0, ay + bh / 2 - 1, x1 - x0, 3, line);
            } else {
                img.fill_rect(ax + bw / 2 - 1, ay + bh, 3, by - ay - bh, line);
            }
        }
        let mut regions = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let (x, y) = slot(i);
            img.fill_rect(x, y, bw, bh, line);
            img.fill_rect(x + 2, y + 2, bw - 4, bh - 4, PALETTE[i % PALETTE.len()]);
            let gx = x + (bw - i64::from(glyph::glyph_width(label))) / 2;
            let bbox = glyph::draw_label(&mut img, gx, y + i64::from(pad), label);
            regions.push(TextRegion {
                text: label.clone(),
                bbox,
            });
        }
        let structure = StructureGraph {
            nodes: labels.to_vec(),
            edges: labels.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect(),
        };
        (img, regions, structure)
    }
}

impl RendererBackend for LayoutRenderer {
    fn name(&self) -> &str {
        "layout"
    }

    fn render(&self, artifact: &CodeArtifact, _limits: &RenderLimits) -> Result<RenderOutput, RenderError> {
        let start = Instant::now();
        if artifact.source().contains(FAIL_TOKEN) {
            return Err(RenderError::NonZeroExit {
                code: Some(1),
                stderr: format!("RuntimeError: {FAIL_TOKEN}"),
                stdout: String::new(),
            });
        }
        let (image, regions, structure) = self.draw(artifact.extracted_labels());
        Ok(RenderOutput {
            image,
            regions,
            structure: Some(structure),
            stdout: String::new(),
            stderr: String::new(),
            wall_time_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

fn base_canvas(request: &RefinementRequest) -> RasterImage {
    match &request.init_image {
        Some(img) if img.dimensions() == (request.width, request.height) => img.clone(),
        _ => RasterImage::filled(request.width, request.height, [255, 255, 255]),
    }
}

/// Returns the init image (or a white canvas) with the edge map drawn in
/// black. Destroys fine text where edges cross it, nothing else.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDiffusion;

impl DiffusionBackend for IdentityDiffusion {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, request: &RefinementRequest) -> Result<RasterImage, BackendError> {
        let mut img = base_canvas(request);
        for (x, y) in request.edge_map.set_pixels() {
            if x < img.width() && y < img.height() {
                img.put(x, y, [0, 0, 0]);
            }
        }
        Ok(img)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Stand-in for a stylizing model: rotates color channels, adds seeded
/// noise scaled by style strength and traces the edge map. Every pixel
/// changes, so any text it is given comes back unreadable.
#[derive(Debug, Clone, Copy)]
pub struct RecolorDiffusion {
    pub max_jitter: u8,
}

impl Default for RecolorDiffusion {
    fn default() -> Self {
        Self { max_jitter: 24 }
    }
}

impl DiffusionBackend for RecolorDiffusion {
    fn name(&self) -> &str {
        "recolor"
    }

    fn refine(&self, request: &RefinementRequest) -> Result<RasterImage, BackendError> {
        let base = base_canvas(request);
        let mut rng = ChaCha8Rng::seed_from_u64(request.style.seed);
        let amp = (f64::from(self.max_jitter) * request.style.strength()).round() as i32;
        let mut img = RasterImage::from_fn(request.width, request.height, |x, y| {
            let [r, g, b] = base.get(x, y);
            let mut px = [g, b, r];
            if amp > 0 {
                for c in &mut px {
                    let j = (rng.next_u32() % (2 * amp as u32 + 1)) as i32 - amp;
                    *c = (i32::from(*c) + j).clamp(0, 255) as u8;
                }
            }
            px
        });
        for (x, y) in request.edge_map.set_pixels() {
            if x < img.width() && y < img.height() {
                img.put(x, y, [40, 30, 90]);
            }
        }
        Ok(img)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Redraws each region as a glyph strip on a background matched to the
/// stylized pixels just outside the padded box.
#[derive(Debug, Clone, Copy)]
pub struct GlyphLabelRenderer {
    pub padding: u32,
}

impl Default for GlyphLabelRenderer {
    fn default() -> Self {
        Self { padding: 2 }
    }
}

/// Mean colour of the one-pixel ring around `[x0, x1) x [y0, y1)`.
fn ring_mean(img: &RasterImage, x0: i64, y0: i64, x1: i64, y1: i64) -> [u8; 3] {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let (mut sum, mut n) = ([0u64; 3], 0u64);
    for y in y0 - 1..=y1 {
        for x in x0 - 1..=x1 {
            let on_ring = x == x0 - 1 || x == x1 || y == y0 - 1 || y == y1;
            if on_ring && (0..w).contains(&x) && (0..h).contains(&y) {
                for (s, c) in sum.iter_mut().zip(img.get(x as u32, y as u32)) {
                    *s += u64::from(c);
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return [255; 3];
    }
    sum.map(|s| ((s + n / 2) / n) as u8)
}

impl LabelRenderer for GlyphLabelRenderer {
    fn name(&self) -> &str {
        "glyph"
    }

    fn render_labels(&self, styled: &RasterImage, regions: &[TextRegion]) -> Result<RasterImage, BackendError> {
        let mut out = styled.clone();
        let pad = i64::from(self.padding);
        for r in regions {
            let b = &r.bbox;
            let (x0, y0) = (b.x.floor() as i64 - pad, b.y.floor() as i64 - pad);
            let (x1, y1) = (b.right().ceil() as i64 + pad, b.bottom().ceil() as i64 + pad);
            let bg = ring_mean(styled, x0, y0, x1, y1);
            out.fill_rect(x0, y0, x1 - x0, y1 - y0, bg);
            glyph::draw_label(&mut out, b.x.round() as i64, b.y.round() as i64, &r.text);
        }
        Ok(out)
    }
}

/// Reads the glyph strips drawn by [`LayoutRenderer`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GlyphOcr;

impl OcrBackend for GlyphOcr {
    fn name(&self) -> &str {
        "glyph"
    }

    fn recognize(&self, image: &RasterImage) -> Result<OcrResult, BackendError> {
        Ok(OcrResult::new(glyph::decode_labels(image)))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// 16 features: 4-bin histograms of R, G and B, then luma mean, luma
/// standard deviation, dark fraction and bright fraction.
#[derive(Debug, Clone, Copy, Default)]
pub struct HistogramEmbedder;

impl EmbedderBackend for HistogramEmbedder {
    fn name(&self) -> &str {
        "histogram"
    }

    fn dimension(&self) -> usize {
        16
    }

    fn embed(&self, image: &RasterImage) -> Result<Vec<f64>, BackendError> {
        let n = image.pixel_count();
        if n == 0 {
            return Err(BackendError::failed("histogram", "empty image"));
        }
        let mut v = vec![0.0; 16];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for px in image.as_bytes().chunks_exact(3) {
            for (c, value) in px.iter().enumerate() {
                v[c * 4 + usize::from(*value / 64)] += 1.0;
            }
            let luma = (0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])) / 255.0;
            sum += luma;
            sum_sq += luma * luma;
            if luma < 0.25 {
                v[14] += 1.0;
            } else if luma > 0.75 {
                v[15] += 1.0;
            }
        }
        let n = n as f64;
        for x in v.iter_mut() {
            *x /= n;
        }
        let mean = sum / n;
        v[12] = mean;
        v[13] = (sum_sq / n - mean * mean).max(0.0).sqrt();
        Ok(v)
    }
}
