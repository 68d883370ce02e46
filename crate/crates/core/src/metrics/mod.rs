//! Evaluation math: label fidelity, Fréchet distance, rater agreement, pair
//! verification and deployment cost.

pub mod agreement;
pub mod cost;
pub mod fid;
pub mod pairs;
pub mod text;

pub use agreement::{hva_composite, krippendorff_alpha, AgreementError, DifferenceMetric, RatingMatrix};
pub use cost::{effective_cost, CostBreakdown, CostError, CostScenario, RetryModel};
pub use fid::{embed_all, fid, matrix_sqrt_psd, EmbedderBackend, FeatureSet, LinalgError};
pub use pairs::{verify_pair, PairStatus, PairVerification, VisualStatus, DEFAULT_IOU_THRESHOLD};
pub use text::{
    cer, cer_breakdown, lem, levenshtein, missing_from_ocr, CerBreakdown, CerMatching, OcrBackend,
    OcrResult, OcrToken,
};

pub use crate::geometry::bbox_iou;
