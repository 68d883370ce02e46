//! Run orchestration, persistence, evaluation and report rendering.

pub mod config;
mod evaluate;
mod report;
mod run;

pub use config::{Backends, BackendsConfig, ConfigError, PipelineConfig};
pub use evaluate::{
    evaluate_run, EvalOptions, ImageFailure, ImageSource, MetricReport, Paradigm, Provenance,
    SubjectBreakdown,
};
pub use report::{format_money, render_report, ReportLayout};
pub use run::{
    load_masks, load_prog, load_regions, prompt_dir_name, prompt_seed, restylize, run_pipeline,
    BackendIdentity, FailureStage, PromptMetrics, PromptRecord, PromptStatus, RunRecord, RunTiming,
    CONFIG_FILE, EDGES_IMAGE, MASK_IMAGE, METRICS_FILE, PROG_IMAGE, RAW_IMAGE, REFINED_IMAGE,
    REPORT_FILE, RUN_FILE, STATUS_FILE,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("run directory {0} already exists and is not empty")]
    RunExists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error(transparent)]
    Refine(#[from] crate::refine::RefineError),
    #[error(transparent)]
    Backend(#[from] crate::backends::BackendError),
    #[error(transparent)]
    Linalg(#[from] crate::metrics::LinalgError),
    #[error("run has no successful prompts")]
    NoSuccessfulPrompts,
}
