//! Review queue: single writer over the event log, lock-free read snapshots.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use cage_core::imaging::RasterImage;
use serde::Serialize;

use crate::log::{Event, EventLog, LOG_FILE};
use crate::model::{
    CandidateItem, Correction, Criterion, DecisionInput, ItemState, JobStatus, PairEntry, QueueStats, RegenJob,
    ReviewDecision, Verdict,
};
use crate::ReviewError;

pub const DEFAULT_LEASE_MS: u64 = 10 * 60 * 1000;
pub const CANDIDATES_DIR: &str = "candidates";
pub const PAIRS_DIR: &str = "pairs";
pub const PAIRS_MANIFEST: &str = "manifest.json";
/// Strength drop applied when a reject names labels or topology but gives
/// no strength of its own.
pub const STRENGTH_STEP: f64 = 0.1;
pub const MIN_STRENGTH: f64 = 0.05;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Hand-driven clock for tests and replays.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone)]
pub struct QueueOptions {
    pub lease_ms: u64,
    pub clock: Arc<dyn Clock>,
}

impl Default for QueueOptions {
    fn default() -> Self {
        Self {
            lease_ms: DEFAULT_LEASE_MS,
            clock: Arc::new(SystemClock),
        }
    }
}

/// State derived from the event log.
#[derive(Debug, Clone, Default)]
pub struct QueueState {
    items: Vec<CandidateItem>,
    states: Vec<ItemState>,
    index: HashMap<String, usize>,
    decisions: Vec<ReviewDecision>,
    jobs: Vec<RegenJob>,
    corrections: BTreeMap<String, Correction>,
}

impl QueueState {
    /// Rebuilds state from events alone.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, ReviewError> {
        let mut s = Self::default();
        for ev in events {
            s.check(ev)?;
            s.apply(ev);
        }
        Ok(s)
    }

    /// Items in enqueue order.
    pub fn items(&self) -> &[CandidateItem] {
        &self.items
    }

    pub fn item(&self, pair_id: &str) -> Option<&CandidateItem> {
        self.index.get(pair_id).map(|&i| &self.items[i])
    }

    pub fn state_of(&self, pair_id: &str) -> Option<ItemState> {
        self.index.get(pair_id).map(|&i| self.states[i])
    }

    pub fn decisions(&self) -> &[ReviewDecision] {
        &self.decisions
    }

    pub fn decision_for(&self, pair_id: &str) -> Option<&ReviewDecision> {
        self.decisions.iter().find(|d| d.pair_id == pair_id)
    }

    pub fn jobs(&self) -> &[RegenJob] {
        &self.jobs
    }

    pub fn correction(&self, pair_id: &str) -> Option<&Correction> {
        self.corrections.get(pair_id)
    }

    fn job_index(&self, job_id: u64) -> Option<usize> {
        self.jobs.iter().position(|j| j.job_id == job_id)
    }

    fn check(&self, ev: &Event) -> Result<(), ReviewError> {
        let bad = |m: String| Err(ReviewError::InconsistentLog(m));
        match ev {
            Event::Enqueued { item } => {
                if self.index.contains_key(&item.pair_id) {
                    return bad(format!("{} enqueued twice", item.pair_id));
                }
            }
            Event::Decided { decision } => match self.state_of(&decision.pair_id) {
                Some(ItemState::Pending) => {}
                Some(s) => return bad(format!("{} decided while {s:?}", decision.pair_id)),
                None => return bad(format!("decision for unknown {}", decision.pair_id)),
            },
            Event::RegenerationQueued { job } => {
                if self.job_index(job.job_id).is_some() {
                    return bad(format!("job {} queued twice", job.job_id));
                }
            }
            Event::RegenerationDone { job_id, pair_id } => {
                match self.job_index(*job_id).map(|i| self.jobs[i].status) {
                    Some(JobStatus::Pending) => {}
                    _ => return bad(format!("job {job_id} is not pending")),
                }
                if !self.index.contains_key(pair_id) {
                    return bad(format!("job {job_id} produced unknown {pair_id}"));
                }
            }
            Event::Corrected { correction } => {
                if self.state_of(&correction.pair_id) != Some(ItemState::Rejected) {
                    return bad(format!("{} corrected but not rejected", correction.pair_id));
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, ev: &Event) {
        match ev {
            Event::Enqueued { item } => {
                self.index.insert(item.pair_id.clone(), self.items.len());
                self.items.push(item.clone());
                self.states.push(ItemState::Pending);
            }
            Event::Decided { decision } => {
                let i = self.index[&decision.pair_id];
                self.states[i] = match decision.verdict {
                    Verdict::Accept => ItemState::Accepted,
                    Verdict::Reject => ItemState::Rejected,
                };
                self.decisions.push(decision.clone());
            }
            Event::RegenerationQueued { job } => self.jobs.push(job.clone()),
            Event::RegenerationDone { job_id, pair_id } => {
                let i = self.job_index(*job_id).expect("checked");
                self.jobs[i].status = JobStatus::Done;
                self.jobs[i].result_pair_id = Some(pair_id.clone());
            }
            Event::Corrected { correction } => {
                let i = self.index[&correction.pair_id];
                self.states[i] = ItemState::ManuallyCorrected;
                self.corrections.insert(correction.pair_id.clone(), correction.clone());
            }
        }
    }

    /// Stats with `leased` supplied by the caller.
    pub fn stats(&self, leased: usize) -> QueueStats {
        let count = |s: ItemState| self.states.iter().filter(|x| **x == s).count();
        let first: Vec<_> = self.decisions.iter().filter(|d| d.attempt == 1).collect();
        let passed = first.iter().filter(|d| d.verdict == Verdict::Accept).count();
        QueueStats {
            pending: count(ItemState::Pending),
            leased,
            accepted: count(ItemState::Accepted),
            rejected: count(ItemState::Rejected),
            manually_corrected: count(ItemState::ManuallyCorrected),
            regenerations_pending: self.jobs.iter().filter(|j| j.status == JobStatus::Pending).count(),
            first_attempt_pass_rate: (!first.is_empty()).then(|| passed as f64 / first.len() as f64),
        }
    }

    /// Manifest entries for accepted and corrected pairs, sorted by id.
    pub fn pair_entries(&self) -> Vec<PairEntry> {
        let mut out: Vec<PairEntry> = self
            .decisions
            .iter()
            .filter_map(|d| {
                let item = self.item(&d.pair_id)?;
                let state = self.state_of(&d.pair_id)?;
                let (reviewer, ts, corrected) = match state {
                    ItemState::Accepted => (d.reviewer.clone(), d.timestamp_ms, false),
                    ItemState::ManuallyCorrected => {
                        let c = self.corrections.get(&d.pair_id)?;
                        (c.reviewer.clone(), c.timestamp_ms, true)
                    }
                    _ => return None,
                };
                Some(PairEntry {
                    pair_id: item.pair_id.clone(),
                    prompt_id: item.prompt_id.clone(),
                    attempt: item.attempt,
                    strength: item.strength(),
                    prog: format!("{}/prog.png", item.pair_id),
                    styled: format!("{}/styled.png", item.pair_id),
                    verification: item.verification.clone(),
                    reviewer,
                    manually_corrected: corrected,
                    timestamp_ms: ts,
                })
            })
            .collect();
        out.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lease {
    pub reviewer: String,
    pub expires_ms: u64,
}

/// Read-only view published after every mutation.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub state: QueueState,
    leases: HashMap<String, Lease>,
}

impl Snapshot {
    pub fn lease(&self, pair_id: &str, now_ms: u64) -> Option<&Lease> {
        self.leases.get(pair_id).filter(|l| l.expires_ms > now_ms)
    }

    pub fn stats(&self, now_ms: u64) -> QueueStats {
        let leased = self
            .leases
            .iter()
            .filter(|(id, l)| l.expires_ms > now_ms && self.state.state_of(id) == Some(ItemState::Pending))
            .count();
        self.state.stats(leased)
    }
}

/// A candidate handed to a reviewer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeasedCandidate {
    #[serde(flatten)]
    pub item: CandidateItem,
    pub auto_reject_suggested: bool,
    pub visual_review_blocked: bool,
    pub lease: Lease,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitOutcome {
    pub decision: ReviewDecision,
    pub regeneration: Option<RegenJob>,
    pub stats: QueueStats,
}

struct Writer {
    log: EventLog,
    state: QueueState,
    leases: HashMap<String, Lease>,
}

impl Writer {
    fn commit(&mut self, ev: Event) -> Result<(), ReviewError> {
        self.state.check(&ev)?;
        self.log.append(&ev)?;
        self.state.apply(&ev);
        Ok(())
    }
}

pub struct ReviewQueue {
    root: PathBuf,
    opts: QueueOptions,
    writer: Mutex<Writer>,
    snapshot: ArcSwap<Snapshot>,
}

fn valid_pair_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ReviewQueue {
    /// Opens the store at `root`, replaying its log. Accepted pairs missing
    /// from the pairs directory are written again.
    pub fn open(root: &Path, opts: QueueOptions) -> Result<Self, ReviewError> {
        for d in [root.to_path_buf(), root.join(CANDIDATES_DIR), root.join(PAIRS_DIR)] {
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let (log, events) = EventLog::open(&root.join(LOG_FILE))?;
        let state = QueueState::replay(&events)?;
        log::info!("{}: replayed {} events", root.display(), events.len());
        let q = Self {
            root: root.to_path_buf(),
            opts,
            snapshot: ArcSwap::from_pointee(Snapshot {
                state: state.clone(),
                leases: HashMap::new(),
            }),
            writer: Mutex::new(Writer {
                log,
                state,
                leases: HashMap::new(),
            }),
        };
        q.sync_pairs_store(&q.lock().state)?;
        Ok(q)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn now_ms(&self) -> u64 {
        self.opts.clock.now_ms()
    }

    fn lock(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, w: &Writer) {
        self.snapshot.store(Arc::new(Snapshot {
            state: w.state.clone(),
            leases: w.leases.clone(),
        }));
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    pub fn stats(&self) -> QueueStats {
        self.snapshot().stats(self.now_ms())
    }

    /// Writes a candidate image into the store and returns its path.
    pub fn store_candidate_image(&self, pair_id: &str, image: &RasterImage) -> Result<PathBuf, ReviewError> {
        if !valid_pair_id(pair_id) {
            return Err(ReviewError::InvalidPairId(pair_id.to_string()));
        }
        let path = self.root.join(CANDIDATES_DIR).join(format!("{pair_id}.png"));
        image.write_png(&path)?;
        Ok(path)
    }

    pub fn enqueue(&self, item: CandidateItem) -> Result<(), ReviewError> {
        if !valid_pair_id(&item.pair_id) {
            return Err(ReviewError::InvalidPairId(item.pair_id));
        }
        let mut w = self.lock();
        if w.state.item(&item.pair_id).is_some() {
            return Err(ReviewError::DuplicatePair(item.pair_id));
        }
        w.commit(Event::Enqueued { item })?;
        self.publish(&w);
        Ok(())
    }

    /// Leases the oldest pending item nobody else holds. A reviewer who
    /// already holds a live lease gets that item again.
    pub fn next_candidate(&self, reviewer: &str) -> Option<LeasedCandidate> {
        let now = self.now_ms();
        let mut w = self.lock();
        let Writer { state, leases, .. } = &mut *w;
        leases.retain(|id, l| l.expires_ms > now && state.state_of(id) == Some(ItemState::Pending));
        let held = state.items().iter().zip(&state.states).find(|(it, s)| {
            **s == ItemState::Pending && leases.get(&it.pair_id).is_some_and(|l| l.reviewer == reviewer)
        });
        let pick = held.or_else(|| {
            state
                .items()
                .iter()
                .zip(&state.states)
                .find(|(it, s)| **s == ItemState::Pending && !leases.contains_key(&it.pair_id))
        });
        let item = pick.map(|(it, _)| it.clone())?;
        let lease = Lease {
            reviewer: reviewer.to_string(),
            expires_ms: now + self.opts.lease_ms,
        };
        leases.insert(item.pair_id.clone(), lease.clone());
        self.publish(&w);
        Some(LeasedCandidate {
            auto_reject_suggested: item.auto_reject_suggested(),
            visual_review_blocked: item.visual_review_blocked(),
            item,
            lease,
        })
    }

    pub fn submit_decision(&self, reviewer: &str, input: DecisionInput) -> Result<SubmitOutcome, ReviewError> {
        let now = self.now_ms();
        let mut w = self.lock();
        let item = w
            .state
            .item(&input.pair_id)
            .cloned()
            .ok_or_else(|| ReviewError::UnknownPair(input.pair_id.clone()))?;
        if w.state.state_of(&item.pair_id) != Some(ItemState::Pending) {
            return Err(ReviewError::AlreadyDecided(item.pair_id));
        }
        match w.leases.get(&item.pair_id) {
            Some(l) if l.reviewer == reviewer && l.expires_ms > now => {}
            Some(l) if l.reviewer == reviewer => return Err(ReviewError::LeaseExpired(item.pair_id)),
            _ => {
                return Err(ReviewError::NotLeased {
                    pair_id: item.pair_id,
                    reviewer: reviewer.to_string(),
                })
            }
        }
        validate_input(&input)?;
        if input.verdict == Verdict::Accept && !item.verification.labels_preserved {
            return Err(ReviewError::AcceptRefused {
                pair_id: item.pair_id,
                missing: item.verification.missing_labels.clone(),
            });
        }

        let decision = ReviewDecision {
            pair_id: item.pair_id.clone(),
            verdict: input.verdict,
            failed: input.failed.clone(),
            adjusted_strength: input.adjusted_strength,
            reviewer: reviewer.to_string(),
            timestamp_ms: now,
            attempt: item.attempt,
        };
        w.commit(Event::Decided {
            decision: decision.clone(),
        })?;
        w.leases.remove(&item.pair_id);
        // the decision is logged; publish even if the follow-up fails
        let follow_up = (|| -> Result<Option<RegenJob>, ReviewError> {
            Ok(match input.verdict {
                Verdict::Accept => {
                    self.write_pair(&item, &item.candidate_path)?;
                    self.write_manifest(&w.state)?;
                    None
                }
                Verdict::Reject => {
                    let job = RegenJob {
                        job_id: w.state.jobs().iter().map(|j| j.job_id).max().unwrap_or(0) + 1,
                        parent_pair_id: item.pair_id.clone(),
                        prompt_id: item.prompt_id.clone(),
                        attempt: item.attempt + 1,
                        strength: input
                            .adjusted_strength
                            .unwrap_or_else(|| default_retry_strength(item.strength(), &input)),
                        status: JobStatus::Pending,
                        result_pair_id: None,
                    };
                    w.commit(Event::RegenerationQueued { job: job.clone() })?;
                    Some(job)
                }
            })
        })();
        self.publish(&w);
        let regeneration = follow_up?;
        let stats = self.snapshot().stats(now);
        Ok(SubmitOutcome {
            decision,
            regeneration,
            stats,
        })
    }

    pub fn pending_jobs(&self) -> Vec<RegenJob> {
        self.snapshot()
            .state
            .jobs()
            .iter()
            .filter(|j| j.status == JobStatus::Pending)
            .cloned()
            .collect()
    }

    /// Enqueues the candidate produced by a regeneration job.
    pub fn complete_regeneration(&self, job_id: u64, item: CandidateItem) -> Result<(), ReviewError> {
        if !valid_pair_id(&item.pair_id) {
            return Err(ReviewError::InvalidPairId(item.pair_id));
        }
        let mut w = self.lock();
        let job = w
            .state
            .jobs()
            .iter()
            .find(|j| j.job_id == job_id)
            .cloned()
            .ok_or(ReviewError::UnknownJob(job_id))?;
        if job.status != JobStatus::Pending {
            return Err(ReviewError::JobNotPending(job_id));
        }
        if item.attempt != job.attempt || item.prompt_id != job.prompt_id {
            return Err(ReviewError::InvalidDecision(format!(
                "job {job_id} expects attempt {} of {}",
                job.attempt, job.prompt_id
            )));
        }
        if w.state.item(&item.pair_id).is_some() {
            return Err(ReviewError::DuplicatePair(item.pair_id));
        }
        let pair_id = item.pair_id.clone();
        w.commit(Event::Enqueued { item })?;
        w.commit(Event::RegenerationDone { job_id, pair_id })?;
        self.publish(&w);
        Ok(())
    }

    /// Replaces a rejected candidate with a hand-corrected image and adds
    /// it to the pairs store, flagged as manually corrected.
    pub fn mark_corrected(&self, pair_id: &str, image: &Path, reviewer: &str) -> Result<(), ReviewError> {
        RasterImage::read_png(image)?;
        let mut w = self.lock();
        let item = w
            .state
            .item(pair_id)
            .cloned()
            .ok_or_else(|| ReviewError::UnknownPair(pair_id.to_string()))?;
        if w.state.state_of(pair_id) != Some(ItemState::Rejected) {
            return Err(ReviewError::InvalidDecision(format!("{pair_id} is not rejected")));
        }
        let stored = self.root.join(CANDIDATES_DIR).join(format!("{pair_id}.corrected.png"));
        std::fs::copy(image, &stored).map_err(io_err(&stored))?;
        w.commit(Event::Corrected {
            correction: Correction {
                pair_id: pair_id.to_string(),
                image: stored.clone(),
                reviewer: reviewer.to_string(),
                timestamp_ms: self.now_ms(),
            },
        })?;
        self.write_pair(&item, &stored)?;
        self.write_manifest(&w.state)?;
        self.publish(&w);
        Ok(())
    }

    fn write_pair(&self, item: &CandidateItem, styled: &Path) -> Result<(), ReviewError> {
        let dir = self.root.join(PAIRS_DIR).join(&item.pair_id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (src, name) in [(item.prog_path.as_path(), "prog.png"), (styled, "styled.png")] {
            let dst = dir.join(name);
            std::fs::copy(src, &dst).map_err(io_err(src))?;
        }
        let v = dir.join("verification.json");
        let text = serde_json::to_string_pretty(&item.verification).expect("verification serializes");
        std::fs::write(&v, text + "\n").map_err(io_err(&v))
    }

    fn write_manifest(&self, state: &QueueState) -> Result<(), ReviewError> {
        let path = self.root.join(PAIRS_DIR).join(PAIRS_MANIFEST);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&state.pair_entries()).expect("manifest serializes");
        std::fs::write(&tmp, text + "\n").map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn sync_pairs_store(&self, state: &QueueState) -> Result<(), ReviewError> {
        for e in state.pair_entries() {
            let item = state.item(&e.pair_id).expect("entry comes from an item");
            if self.root.join(PAIRS_DIR).join(&e.styled).exists() {
                continue;
            }
            let styled = match state.correction(&e.pair_id) {
                Some(c) => c.image.clone(),
                None => item.candidate_path.clone(),
            };
            self.write_pair(item, &styled)?;
        }
        self.write_manifest(state)
    }

    /// Accepted pairs as listed in the manifest file.
    pub fn read_manifest(&self) -> Result<Vec<PairEntry>, ReviewError> {
        let path = self.root.join(PAIRS_DIR).join(PAIRS_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| ReviewError::CorruptLog {
            path,
            line: 0,
            message: e.to_string(),
        })
    }
}

fn validate_input(d: &DecisionInput) -> Result<(), ReviewError> {
    let invalid = |m: &str| Err(ReviewError::InvalidDecision(m.to_string()));
    match d.verdict {
        Verdict::Accept if !d.failed.is_empty() => return invalid("accept cannot list failed criteria"),
        Verdict::Accept if d.adjusted_strength.is_some() => {
            return invalid("adjusted strength is only valid on reject")
        }
        Verdict::Reject if d.failed.is_empty() => return invalid("reject needs at least one failed criterion"),
        _ => {}
    }
    if let Some(s) = d.adjusted_strength {
        if !(s > 0.0 && s <= 1.0) {
            return Err(ReviewError::InvalidStrength(s));
        }
    }
    Ok(())
}

fn default_retry_strength(current: f64, d: &DecisionInput) -> f64 {
    if d.failed.contains(&Criterion::Labels) || d.failed.contains(&Criterion::Topology) {
        (current - STRENGTH_STEP).max(MIN_STRENGTH)
    } else {
        current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cage_core::metrics::{PairStatus, PairVerification, VisualStatus};
    use cage_core::refine::StyleSpec;

    fn verification(labels: bool) -> PairVerification {
        PairVerification {
            labels_preserved: labels,
            missing_labels: if labels { vec![] } else { vec!["stomach".into()] },
            topology_ok: true,
            min_iou: Some(1.0),
            matches: vec![],
            visual_ok: VisualStatus::PendingHuman,
            overall: if labels { PairStatus::Pending } else { PairStatus::Rejected },
        }
    }

    fn item(dir: &Path, id: &str, labels: bool) -> CandidateItem {
        let png = dir.join("x.png");
        if !png.exists() {
            RasterImage::filled(2, 2, [9, 9, 9]).write_png(&png).unwrap();
        }
        CandidateItem {
            pair_id: id.into(),
            prompt_id: id.into(),
            run_dir: dir.into(),
            prompt_dir: id.into(),
            prog_path: png.clone(),
            candidate_path: png,
            verification: verification(labels),
            style: StyleSpec::new("flat", 0.6, 1).unwrap(),
            attempt: 1,
        }
    }

    fn open(dir: &Path, clock: Arc<ManualClock>) -> ReviewQueue {
        ReviewQueue::open(
            &dir.join("store"),
            QueueOptions {
                lease_ms: 1000,
                clock,
            },
        )
        .unwrap()
    }

    #[test]
    fn lease_expiry_returns_item() {
        let tmp = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(0));
        let q = open(tmp.path(), clock.clone());
        q.enqueue(item(tmp.path(), "a", true)).unwrap();
        assert_eq!(q.next_candidate("r1").unwrap().item.pair_id, "a");
        assert!(q.next_candidate("r2").is_none());
        assert_eq!(q.next_candidate("r1").unwrap().item.pair_id, "a", "holder gets the same item");
        assert_eq!(q.stats().leased, 1);
        clock.advance(1000);
        assert!(matches!(
            q.submit_decision("r1", DecisionInput::accept("a")),
            Err(ReviewError::LeaseExpired(_))
        ));
        assert_eq!(q.next_candidate("r2").unwrap().lease.reviewer, "r2");
        assert!(matches!(
            q.submit_decision("r1", DecisionInput::accept("a")),
            Err(ReviewError::NotLeased { .. })
        ));
        q.submit_decision("r2", DecisionInput::accept("a")).unwrap();
        assert!(matches!(
            q.submit_decision("r2", DecisionInput::accept("a")),
            Err(ReviewError::AlreadyDecided(_))
        ));
    }

    #[test]
    fn decision_shape_is_validated() {
        let tmp = tempfile::tempdir().unwrap();
        let q = open(tmp.path(), Arc::new(ManualClock::new(0)));
        q.enqueue(item(tmp.path(), "a", true)).unwrap();
        q.next_candidate("r").unwrap();
        let empty = DecisionInput::reject("a", [], None);
        assert!(matches!(q.submit_decision("r", empty), Err(ReviewError::InvalidDecision(_))));
        let mut acc = DecisionInput::accept("a");
        acc.adjusted_strength = Some(0.3);
        assert!(matches!(q.submit_decision("r", acc), Err(ReviewError::InvalidDecision(_))));
        let bad = DecisionInput::reject("a", [Criterion::Visual], Some(1.5));
        assert!(matches!(q.submit_decision("r", bad), Err(ReviewError::InvalidStrength(_))));
        assert!(matches!(
            q.submit_decision("r", DecisionInput::accept("zzz")),
            Err(ReviewError::UnknownPair(_))
        ));
        assert_eq!(q.stats().pending, 1);
    }

    #[test]
    fn default_retry_strength_drops_on_automated_failures() {
        let tmp = tempfile::tempdir().unwrap();
        let q = open(tmp.path(), Arc::new(ManualClock::new(0)));
        for id in ["a", "b"] {
            q.enqueue(item(tmp.path(), id, true)).unwrap();
        }
        q.next_candidate("r").unwrap();
        let out = q.submit_decision("r", DecisionInput::reject("a", [Criterion::Topology], None)).unwrap();
        assert!((out.regeneration.unwrap().strength - 0.5).abs() < 1e-12);
        q.next_candidate("r").unwrap();
        let out = q.submit_decision("r", DecisionInput::reject("b", [Criterion::Visual], None)).unwrap();
        assert_eq!(out.regeneration.unwrap().strength, 0.6);
    }

    #[test]
    fn pair_ids_are_path_safe() {
        let tmp = tempfile::tempdir().unwrap();
        let q = open(tmp.path(), Arc::new(ManualClock::new(0)));
        for bad in ["", "../x", "a/b", ".hidden"] {
            assert!(matches!(q.enqueue(item(tmp.path(), bad, true)), Err(ReviewError::InvalidPairId(_))));
        }
    }

    #[test]
    fn replay_rejects_inconsistent_logs() {
        let tmp = tempfile::tempdir().unwrap();
        let it = item(tmp.path(), "a", true);
        let ev = Event::Enqueued { item: it };
        assert!(matches!(QueueState::replay([&ev, &ev]), Err(ReviewError::InconsistentLog(_))));
    }
}
