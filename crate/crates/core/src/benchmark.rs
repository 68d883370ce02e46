//! Benchmark manifests of diagram prompts and the reference image set.
//!
//! Manifests are JSON Lines: one [`DiagramPrompt`] object per line, blank
//! lines ignored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Biology,
    Chemistry,
    Physics,
    Mathematics,
}

impl Subject {
    pub const ALL: [Subject; 4] = [
        Subject::Biology,
        Subject::Chemistry,
        Subject::Physics,
        Subject::Mathematics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::Biology => "biology",
            Subject::Chemistry => "chemistry",
            Subject::Physics => "physics",
            Subject::Mathematics => "mathematics",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subject::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| format!("unknown subject {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GradeBand {
    #[serde(rename = "K-5")]
    K5,
    #[serde(rename = "6-8")]
    G6to8,
    #[serde(rename = "9-12")]
    G9to12,
}

impl GradeBand {
    pub fn as_str(self) -> &'static str {
        match self {
            GradeBand::K5 => "K-5",
            GradeBand::G6to8 => "6-8",
            GradeBand::G9to12 => "9-12",
        }
    }
}

impl fmt::Display for GradeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradeBand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "K-5" | "k-5" => Ok(GradeBand::K5),
            "6-8" => Ok(GradeBand::G6to8),
            "9-12" => Ok(GradeBand::G9to12),
            other => Err(format!("unknown grade band {other:?}")),
        }
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramPrompt {
    pub id: String,
    pub subject: Subject,
    pub grade_band: GradeBand,
    pub topic: String,
    pub labels: Vec<String>,
    pub prompt_text: String,
}

impl DiagramPrompt {
    /// Builds a prompt, rejecting an empty id or topic. Label-list problems
    /// are reported by [`validate_manifest`] instead so that a whole manifest
    /// can be checked in one pass.
    pub fn new(
        id: impl Into<String>,
        subject: Subject,
        grade_band: GradeBand,
        topic: impl Into<String>,
        labels: Vec<String>,
        prompt_text: impl Into<String>,
    ) -> Result<Self, BenchmarkError> {
        let p = Self {
            id: id.into(),
            subject,
            grade_band,
            topic: topic.into(),
            labels,
            prompt_text: prompt_text.into(),
        };
        p.check_fields()?;
        Ok(p)
    }

    fn check_fields(&self) -> Result<(), BenchmarkError> {
        if self.id.trim().is_empty() {
            return Err(BenchmarkError::EmptyField("id"));
        }
        if self.topic.trim().is_empty() {
            return Err(BenchmarkError::EmptyField("topic"));
        }
        Ok(())
    }
}

/// Case-folds and collapses internal whitespace; the comparison key used for
/// labels throughout the crate.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("duplicate prompt id(s): {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("reference set {0} contains zero images")]
    ZeroImages(PathBuf),
    #[error("reference image {path} is unreadable: {message}")]
    BadImage { path: PathBuf, message: String },
}

/// Parses manifest text. Every record is checked; the first malformed line
/// aborts with its 1-based line number.
pub fn parse_manifest(text: &str) -> Result<Vec<DiagramPrompt>, BenchmarkError> {
    let mut prompts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let prompt: DiagramPrompt = serde_json::from_str(line).map_err(|e| BenchmarkError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        prompt.check_fields().map_err(|e| BenchmarkError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        prompts.push(prompt);
    }
    let dups = duplicate_ids(&prompts);
    if !dups.is_empty() {
        return Err(BenchmarkError::DuplicateIds(dups));
    }
    Ok(prompts)
}

pub fn load_manifest(path: &Path) -> Result<Vec<DiagramPrompt>, BenchmarkError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchmarkError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_manifest(&text)
}

pub fn manifest_to_string(prompts: &[DiagramPrompt]) -> String {
    let mut out = String::new();
    for p in prompts {
        out.push_str(&serde_json::to_string(p).expect("prompt serialization is infallible"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, prompts: &[DiagramPrompt]) -> Result<(), BenchmarkError> {
    std::fs::write(path, manifest_to_string(prompts)).map_err(|e| BenchmarkError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn duplicate_ids(prompts: &[DiagramPrompt]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for p in prompts {
        if !seen.insert(p.id.as_str()) && !dups.contains(&p.id) {
            dups.push(p.id.clone());
        }
    }
    dups
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataMismatch {
    pub subject: Subject,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelIssue {
    pub prompt_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestValidation {
    pub total: usize,
    pub counts: BTreeMap<Subject, usize>,
    pub duplicate_ids: Vec<String>,
    /// Prompts with no labels or with a blank label.
    pub empty_labels: Vec<String>,
    /// Labels that collide with an earlier label of the same prompt after
    /// normalization.
    pub duplicate_labels: Vec<LabelIssue>,
    pub strata_mismatches: Vec<StrataMismatch>,
    pub pass: bool,
}

/// Computes per-subject counts and collects every problem found. An empty
/// manifest fails.
pub fn validate_manifest(
    prompts: &[DiagramPrompt],
    expected_strata: Option<&BTreeMap<Subject, usize>>,
) -> ManifestValidation {
    let mut counts = BTreeMap::new();
    for p in prompts {
        *counts.entry(p.subject).or_insert(0) += 1;
    }

    let mut duplicate_ids = duplicate_ids(prompts);
    duplicate_ids.sort();

    let mut empty_labels = Vec::new();
    let mut duplicate_labels = Vec::new();
    for p in prompts {
        if p.labels.is_empty() || p.labels.iter().any(|l| l.trim().is_empty()) {
            empty_labels.push(p.id.clone());
        }
        let mut seen = HashSet::new();
        for label in &p.labels {
            if !seen.insert(normalize_label(label)) {
                duplicate_labels.push(LabelIssue {
                    prompt_id: p.id.clone(),
                    label: label.clone(),
                });
            }
        }
    }
    empty_labels.sort();
    empty_labels.dedup();
    duplicate_labels.sort_by(|a, b| (&a.prompt_id, &a.label).cmp(&(&b.prompt_id, &b.label)));

    let mut strata_mismatches = Vec::new();
    if let Some(expected) = expected_strata {
        for subject in Subject::ALL {
            let want = expected.get(&subject).copied().unwrap_or(0);
            let got = counts.get(&subject).copied().unwrap_or(0);
            if want != got {
                strata_mismatches.push(StrataMismatch {
                    subject,
                    expected: want,
                    actual: got,
                });
            }
        }
    }

    let pass = !prompts.is_empty()
        && duplicate_ids.is_empty()
        && empty_labels.is_empty()
        && duplicate_labels.is_empty()
        && strata_mismatches.is_empty();
    ManifestValidation {
        total: prompts.len(),
        counts,
        duplicate_ids,
        empty_labels,
        duplicate_labels,
        strata_mismatches,
        pass,
    }
}

/// Subject strata of the 400-prompt benchmark.
pub fn benchmark_strata() -> BTreeMap<Subject, usize> {
    BTreeMap::from([
        (Subject::Biology, 110),
        (Subject::Chemistry, 95),
        (Subject::Physics, 95),
        (Subject::Mathematics, 100),
    ])
}

pub const REFERENCE_INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub id: String,
    /// Path relative to the set root.
    pub file: PathBuf,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub root: PathBuf,
    pub entries: Vec<ReferenceEntry>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, entry: &ReferenceEntry) -> PathBuf {
        self.root.join(&entry.file)
    }

    pub fn load_images(&self) -> Result<Vec<RasterImage>, BenchmarkError> {
        self.entries
            .iter()
            .map(|e| {
                let path = self.path_of(e);
                RasterImage::read_png(&path).map_err(|err| BenchmarkError::BadImage {
                    path,
                    message: err.to_string(),
                })
            })
            .collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Indexes every `*.png` directly under `dir` in file-name order. All images
/// must decode. The index file is written if absent; when present, entries
/// whose checksum no longer matches are reported as unreadable.
pub fn load_reference_set(dir: &Path) -> Result<ReferenceSet, BenchmarkError> {
    let io_err = |e: std::io::Error| BenchmarkError::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BenchmarkError::ZeroImages(dir.to_path_buf()));
    }

    let index_path = dir.join(REFERENCE_INDEX_FILE);
    let previous: Option<HashMap<PathBuf, String>> = std::fs::read_to_string(&index_path)
        .ok()
        .and_then(|s| serde_json::from_str::<ReferenceSet>(&s).ok())
        .map(|set| set.entries.into_iter().map(|e| (e.file, e.sha256)).collect());

    let mut entries = Vec::with_capacity(files.len());
    for path in files {
        let bytes = std::fs::read(&path).map_err(|e| BenchmarkError::Io {
            path: path.clone(),
            source: e,
        })?;
        RasterImage::decode_png(&bytes).map_err(|e| BenchmarkError::BadImage {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let file = PathBuf::from(path.file_name().expect("read_dir yields named entries"));
        let sha256 = sha256_hex(&bytes);
        if let Some(known) = previous.as_ref().and_then(|m| m.get(&file)) {
            if *known != sha256 {
                return Err(BenchmarkError::BadImage {
                    path,
                    message: "checksum differs from index".into(),
                });
            }
        }
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        entries.push(ReferenceEntry { id, file, sha256 });
    }

    let set = ReferenceSet {
        root: dir.to_path_buf(),
        entries,
    };
    if previous.is_none() {
        let mut f = std::fs::File::create(&index_path).map_err(|e| BenchmarkError::Io {
            path: index_path.clone(),
            source: e,
        })?;
        let body = serde_json::to_string_pretty(&set).expect("reference set serializes");
        f.write_all(body.as_bytes())
            .map_err(|e| BenchmarkError::Io {
                path: index_path,
                source: e,
            })?;
    }
    Ok(set)
}
