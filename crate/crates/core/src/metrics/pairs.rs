use serde::{Deserialize, Serialize};

use super::text::{lem, missing_from_ocr, ocr_candidates, OcrBackend};
use crate::backends::BackendError;
use crate::benchmark::normalize_label;
use crate::geometry::{bbox_iou, BBox};
use crate::imaging::RasterImage;
use crate::synth::RenderOutput;

/// Default IoU a label box must keep between the two images.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisualStatus {
    Pass,
    Fail,
    PendingHuman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatus {
    Accepted,
    Rejected,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatch {
    pub label: String,
    /// Best IoU among same-text boxes found in the stylized image.
    pub iou: f64,
}

/// Automated and human criteria for a (programmatic, stylized) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerification {
    pub labels_preserved: bool,
    /// Reference labels the stylized image's OCR text lacks.
    pub missing_labels: Vec<String>,
    pub topology_ok: bool,
    pub min_iou: Option<f64>,
    pub matches: Vec<LabelMatch>,
    pub visual_ok: VisualStatus,
    pub overall: PairStatus,
}

impl PairVerification {
    fn derive_overall(labels: bool, topology: bool, visual: VisualStatus) -> PairStatus {
        if !labels || !topology {
            return PairStatus::Rejected;
        }
        match visual {
            VisualStatus::Pass => PairStatus::Accepted,
            VisualStatus::Fail => PairStatus::Rejected,
            VisualStatus::PendingHuman => PairStatus::Pending,
        }
    }

    /// Records the human visual-quality verdict.
    pub fn with_visual(mut self, visual: VisualStatus) -> Self {
        self.visual_ok = visual;
        self.overall = Self::derive_overall(self.labels_preserved, self.topology_ok, visual);
        self
    }
}

/// Checks label preservation (OCR comparison) and label-box topology.
/// Reference labels and boxes come from the renderer's regions when
/// available, otherwise from OCR of the programmatic image. The visual
/// criterion is left pending for a human reviewer.
pub fn verify_pair(
    prog: &RenderOutput,
    styled: &RasterImage,
    ocr: &dyn OcrBackend,
    iou_threshold: f64,
) -> Result<PairVerification, BackendError> {
    let reference: Vec<(String, BBox)> = if prog.regions.is_empty() {
        ocr.recognize(&prog.image)?
            .tokens
            .into_iter()
            .map(|t| (t.text, t.bbox))
            .collect()
    } else {
        prog.regions.iter().map(|r| (r.text.clone(), r.bbox)).collect()
    };
    let styled_ocr = ocr.recognize(styled)?;
    let labels: Vec<String> = reference.iter().map(|(t, _)| t.clone()).collect();

    let labels_preserved = !labels.is_empty() && lem(&labels, &styled_ocr) == 1.0;
    let missing_labels = missing_from_ocr(&labels, &styled_ocr);

    let max_words = labels
        .iter()
        .map(|l| l.split_whitespace().count())
        .max()
        .unwrap_or(1);
    let candidates = ocr_candidates(&styled_ocr, max_words);
    let matches: Vec<LabelMatch> = reference
        .iter()
        .map(|(text, bbox)| {
            let key = normalize_label(text);
            let iou = candidates
                .iter()
                .filter(|c| normalize_label(&c.text) == key)
                .map(|c| bbox_iou(bbox, &c.bbox))
                .fold(0.0, f64::max);
            LabelMatch {
                label: text.clone(),
                iou,
            }
        })
        .collect();
    let min_iou = matches.iter().map(|m| m.iou).reduce(f64::min);
    let topology_ok = min_iou.is_some_and(|v| v >= iou_threshold);
    let visual = VisualStatus::PendingHuman;
    Ok(PairVerification {
        labels_preserved,
        missing_labels,
        topology_ok,
        min_iou,
        matches,
        visual_ok: visual,
        overall: PairVerification::derive_overall(labels_preserved, topology_ok, visual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verification(labels: bool, topology: bool) -> PairVerification {
        PairVerification {
            labels_preserved: labels,
            missing_labels: vec![],
            topology_ok: topology,
            min_iou: Some(1.0),
            matches: vec![],
            visual_ok: VisualStatus::PendingHuman,
            overall: PairVerification::derive_overall(labels, topology, VisualStatus::PendingHuman),
        }
    }

    #[test]
    fn overall_status_rules() {
        assert_eq!(verification(true, true).overall, PairStatus::Pending);
        assert_eq!(verification(true, true).with_visual(VisualStatus::Pass).overall, PairStatus::Accepted);
        assert_eq!(verification(true, true).with_visual(VisualStatus::Fail).overall, PairStatus::Rejected);
        assert_eq!(verification(false, true).with_visual(VisualStatus::Pass).overall, PairStatus::Rejected);
        assert_eq!(verification(true, false).with_visual(VisualStatus::Pass).overall, PairStatus::Rejected);
    }
}
