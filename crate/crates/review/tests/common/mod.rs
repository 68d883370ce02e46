#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cage_core::benchmark::{DiagramPrompt, GradeBand, Subject};
use cage_core::harness::{run_pipeline, Backends, BackendsConfig, PipelineConfig, RunRecord};
use cage_core::imaging::RasterImage;
use cage_core::metrics::{PairStatus, PairVerification, VisualStatus};
use cage_core::refine::StyleSpec;
use cage_review::{CandidateItem, ManualClock, QueueOptions, ReviewQueue};

pub fn backends() -> Backends {
    Backends::from_config(&BackendsConfig::mock()).unwrap()
}

pub fn mock_run(dir: &Path, n: usize) -> (PathBuf, RunRecord) {
    let prompts: Vec<DiagramPrompt> = (0..n)
        .map(|i| {
            DiagramPrompt::new(
                format!("bio-{i}"),
                Subject::Biology,
                GradeBand::G6to8,
                "cell",
                vec!["nucleus".into(), format!("organelle {i}"), "membrane".into()],
                "Draw a cell.",
            )
            .unwrap()
        })
        .collect();
    let run_dir = dir.join("run");
    let run = run_pipeline(&prompts, &backends(), &PipelineConfig::mock(), &run_dir).unwrap();
    (run_dir, run)
}

pub fn open(dir: &Path, clock: Arc<ManualClock>) -> ReviewQueue {
    ReviewQueue::open(
        &dir.join("store"),
        QueueOptions {
            lease_ms: 10 * 60 * 1000,
            clock,
        },
    )
    .unwrap()
}

/// A synthetic candidate pointing at a tiny image.
pub fn item(dir: &Path, id: &str, attempt: u32, labels_preserved: bool) -> CandidateItem {
    let png = dir.join("tiny.png");
    if !png.exists() {
        RasterImage::filled(4, 4, [200, 10, 10]).write_png(&png).unwrap();
    }
    CandidateItem {
        pair_id: id.into(),
        prompt_id: id.into(),
        run_dir: dir.into(),
        prompt_dir: id.into(),
        prog_path: png.clone(),
        candidate_path: png,
        verification: PairVerification {
            labels_preserved,
            missing_labels: if labels_preserved { vec![] } else { vec!["aorta".into()] },
            topology_ok: labels_preserved,
            min_iou: Some(if labels_preserved { 1.0 } else { 0.0 }),
            matches: vec![],
            visual_ok: VisualStatus::PendingHuman,
            overall: if labels_preserved { PairStatus::Pending } else { PairStatus::Rejected },
        },
        style: StyleSpec::new("flat colors", 0.6, 7).unwrap(),
        attempt,
    }
}
