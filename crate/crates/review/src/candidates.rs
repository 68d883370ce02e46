//! Turning finished pipeline runs into review candidates.

use std::path::Path;

use cage_core::harness::{restylize, Backends, PipelineConfig, PromptRecord, RunRecord, PROG_IMAGE};

use crate::model::CandidateItem;
use crate::queue::ReviewQueue;
use crate::ReviewError;

/// `<prompt dir>-s<strength in hundredths>-a<attempt>`.
pub fn pair_id(prompt_dir: &str, strength: f64, attempt: u32) -> String {
    format!("{prompt_dir}-s{:03}-a{attempt}", (strength * 100.0).round() as u32)
}

fn candidate(
    queue: &ReviewQueue,
    run_dir: &Path,
    record: &PromptRecord,
    strength: f64,
    attempt: u32,
    backends: &Backends,
    cfg: &PipelineConfig,
) -> Result<CandidateItem, ReviewError> {
    let prompt_dir = run_dir.join(&record.dir);
    let (styled, verification) = restylize(&prompt_dir, record, strength, backends, cfg)?;
    let verification = verification.ok_or(ReviewError::NoOcr)?;
    let pair_id = pair_id(&record.dir, strength, attempt);
    let candidate_path = queue.store_candidate_image(&pair_id, &styled.refined)?;
    Ok(CandidateItem {
        pair_id,
        prompt_id: record.prompt.id.clone(),
        run_dir: run_dir.to_path_buf(),
        prompt_dir: record.dir.clone(),
        prog_path: prompt_dir.join(PROG_IMAGE),
        candidate_path,
        verification,
        style: styled.request.style.clone(),
        attempt,
    })
}

/// One candidate per (successful prompt, strength), automated pair
/// verification attached. Returns the number enqueued.
pub fn enqueue_candidates(
    queue: &ReviewQueue,
    run_dir: &Path,
    run: &RunRecord,
    strengths: &[f64],
    backends: &Backends,
    cfg: &PipelineConfig,
) -> Result<usize, ReviewError> {
    if strengths.is_empty() {
        return Err(ReviewError::EmptyStrengths);
    }
    if let Some(s) = strengths.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return Err(ReviewError::InvalidStrength(*s));
    }
    if backends.ocr.is_none() {
        return Err(ReviewError::NoOcr);
    }
    let records: Vec<&PromptRecord> = run.succeeded().collect();
    if records.is_empty() {
        return Err(ReviewError::EmptyRun);
    }
    let mut n = 0;
    for record in records {
        for &strength in strengths {
            let item = candidate(queue, run_dir, record, strength, 1, backends, cfg)?;
            queue.enqueue(item)?;
            n += 1;
        }
    }
    Ok(n)
}

/// Runs every pending regeneration job and enqueues its candidate.
/// Returns the new pair ids.
pub fn run_regenerations(queue: &ReviewQueue, backends: &Backends, cfg: &PipelineConfig) -> Result<Vec<String>, ReviewError> {
    let mut out = Vec::new();
    for job in queue.pending_jobs() {
        let snapshot = queue.snapshot();
        let parent = snapshot
            .state
            .item(&job.parent_pair_id)
            .ok_or_else(|| ReviewError::UnknownPair(job.parent_pair_id.clone()))?;
        let run = RunRecord::load(&parent.run_dir)?;
        let record = run
            .prompts
            .iter()
            .find(|p| p.dir == parent.prompt_dir)
            .ok_or_else(|| ReviewError::UnknownPair(parent.prompt_id.clone()))?;
        let item = candidate(queue, &parent.run_dir, record, job.strength, job.attempt, backends, cfg)?;
        let id = item.pair_id.clone();
        queue.complete_regeneration(job.job_id, item)?;
        out.push(id);
    }
    Ok(out)
}
