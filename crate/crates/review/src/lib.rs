//! Human curation of stylized diagram pairs: a lease-based review queue
//! persisted as an append-only decision log, regeneration of rejected
//! candidates, an accepted-pairs store and the HTTP service in front of it.

pub mod candidates;
pub mod config;
pub mod log;
pub mod model;
pub mod queue;
pub mod server;

use std::path::PathBuf;

pub use candidates::{enqueue_candidates, pair_id, run_regenerations};
pub use config::ReviewConfig;
pub use model::{
    CandidateItem, Correction, Criterion, DecisionInput, ItemState, JobStatus, PairEntry, QueueStats, RegenJob,
    ReviewDecision, Verdict,
};
pub use queue::{Clock, LeasedCandidate, ManualClock, QueueOptions, QueueState, ReviewQueue, SubmitOutcome, SystemClock};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("decision log is inconsistent: {0}")]
    InconsistentLog(String),
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("pair {0} is already queued")]
    DuplicatePair(String),
    #[error("invalid pair id {0:?}")]
    InvalidPairId(String),
    #[error("pair {pair_id} is not leased by {reviewer}")]
    NotLeased { pair_id: String, reviewer: String },
    #[error("lease on {0} expired")]
    LeaseExpired(String),
    #[error("pair {0} is already decided")]
    AlreadyDecided(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("cannot accept {pair_id}: labels not preserved (missing {missing:?})")]
    AcceptRefused { pair_id: String, missing: Vec<String> },
    #[error("unknown regeneration job {0}")]
    UnknownJob(u64),
    #[error("regeneration job {0} is not pending")]
    JobNotPending(u64),
    #[error("at least one style strength is required")]
    EmptyStrengths,
    #[error("style strength must lie in (0, 1], got {0}")]
    InvalidStrength(f64),
    #[error("run has no successful prompts")]
    EmptyRun,
    #[error("an OCR backend is required to verify candidates")]
    NoOcr,
    #[error("invalid review config: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] cage_core::harness::HarnessError),
    #[error(transparent)]
    Imaging(#[from] cage_core::imaging::ImagingError),
}
