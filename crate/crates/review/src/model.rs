//! Queue records: candidates, decisions, regeneration jobs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use cage_core::metrics::PairVerification;
use cage_core::refine::StyleSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateItem {
    pub pair_id: String,
    pub prompt_id: String,
    /// Run the candidate was derived from, for regeneration.
    pub run_dir: PathBuf,
    /// Prompt directory name inside the run.
    pub prompt_dir: String,
    pub prog_path: PathBuf,
    pub candidate_path: PathBuf,
    pub verification: PairVerification,
    pub style: StyleSpec,
    pub attempt: u32,
}

impl CandidateItem {
    /// Automated checks already failed; the reviewer is expected to reject.
    pub fn auto_reject_suggested(&self) -> bool {
        !self.verification.labels_preserved || !self.verification.topology_ok
    }

    /// Accept is impossible, so the visual judgement is moot.
    pub fn visual_review_blocked(&self) -> bool {
        !self.verification.labels_preserved
    }

    pub fn strength(&self) -> f64 {
        self.style.strength()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Labels,
    Topology,
    Visual,
}

/// What a reviewer sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionInput {
    pub pair_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub failed: BTreeSet<Criterion>,
    #[serde(default)]
    pub adjusted_strength: Option<f64>,
}

impl DecisionInput {
    pub fn accept(pair_id: impl Into<String>) -> Self {
        Self {
            pair_id: pair_id.into(),
            verdict: Verdict::Accept,
            failed: BTreeSet::new(),
            adjusted_strength: None,
        }
    }

    pub fn reject<I: IntoIterator<Item = Criterion>>(pair_id: impl Into<String>, failed: I, strength: Option<f64>) -> Self {
        Self {
            pair_id: pair_id.into(),
            verdict: Verdict::Reject,
            failed: failed.into_iter().collect(),
            adjusted_strength: strength,
        }
    }
}

/// A decision as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub pair_id: String,
    pub verdict: Verdict,
    pub failed: BTreeSet<Criterion>,
    pub adjusted_strength: Option<f64>,
    pub reviewer: String,
    pub timestamp_ms: u64,
    /// Attempt number of the decided item.
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
}

/// Re-stylization of a rejected candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenJob {
    pub job_id: u64,
    pub parent_pair_id: String,
    pub prompt_id: String,
    pub attempt: u32,
    pub strength: f64,
    pub status: JobStatus,
    /// Candidate produced by the job.
    pub result_pair_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemState {
    Pending,
    Accepted,
    Rejected,
    /// Rejected, then replaced by a hand-edited image.
    ManuallyCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub pair_id: String,
    pub image: PathBuf,
    pub reviewer: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending: usize,
    pub leased: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub manually_corrected: usize,
    pub regenerations_pending: usize,
    /// Accepted first attempts over decided first attempts; null before any
    /// first-attempt decision.
    pub first_attempt_pass_rate: Option<f64>,
}

/// One entry of the accepted-pairs manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair_id: String,
    pub prompt_id: String,
    pub attempt: u32,
    pub strength: f64,
    /// Relative to the pairs directory.
    pub prog: String,
    pub styled: String,
    pub verification: PairVerification,
    pub reviewer: String,
    pub manually_corrected: bool,
    pub timestamp_ms: u64,
}
