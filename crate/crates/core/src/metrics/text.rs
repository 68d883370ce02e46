//! Label-fidelity metrics over OCR output.

use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::benchmark::normalize_label;
use crate::geometry::BBox;
use crate::imaging::RasterImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    pub tokens: Vec<OcrToken>,
}

impl OcrResult {
    pub fn new(tokens: Vec<OcrToken>) -> Self {
        Self { tokens }
    }

    /// Token texts joined by single spaces.
    pub fn concatenated_text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub trait OcrBackend: Send + Sync {
    fn name(&self) -> &str;

    fn recognize(&self, image: &RasterImage) -> Result<OcrResult, BackendError>;

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Labels of `labels` not found in the OCR text, compared after
/// normalization.
pub fn missing_from_ocr(labels: &[String], ocr: &OcrResult) -> Vec<String> {
    let haystack = normalize_label(&ocr.concatenated_text());
    labels
        .iter()
        .filter(|l| !haystack.contains(&normalize_label(l)))
        .cloned()
        .collect()
}

/// Fraction of labels that occur as a case-insensitive, whitespace-normalized
/// substring of the OCR text. An empty label list scores 0.
pub fn lem(labels: &[String], ocr: &OcrResult) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let found = labels.len() - missing_from_ocr(labels, ocr).len();
    found as f64 / labels.len() as f64
}

/// How OCR candidates are matched to labels for CER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CerMatching {
    /// Each label takes its closest candidate; candidates may be reused.
    #[default]
    Independent,
    /// One-to-one minimum-cost assignment of labels to candidates.
    Assignment,
}

/// Longest token n-gram considered as a CER candidate.
pub const MAX_CANDIDATE_NGRAM: usize = 3;

/// OCR tokens and their contiguous n-grams up to `max_n`, space-joined, each
/// with the union box of its tokens.
pub fn ocr_candidates(ocr: &OcrResult, max_n: usize) -> Vec<OcrToken> {
    let t = &ocr.tokens;
    let mut out = Vec::new();
    for n in 1..=max_n.max(1) {
        for w in t.windows(n) {
            let text = w.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" ");
            let x0 = w.iter().map(|x| x.bbox.x).fold(f64::INFINITY, f64::min);
            let y0 = w.iter().map(|x| x.bbox.y).fold(f64::INFINITY, f64::min);
            let x1 = w.iter().map(|x| x.bbox.right()).fold(f64::NEG_INFINITY, f64::max);
            let y1 = w.iter().map(|x| x.bbox.bottom()).fold(f64::NEG_INFINITY, f64::max);
            out.push(OcrToken {
                text,
                bbox: BBox::new(x0, y0, x1 - x0, y1 - y0),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CerBreakdown {
    /// Capped distance per label, in label order.
    pub distances: Vec<usize>,
    /// Normalized character count per label.
    pub lengths: Vec<usize>,
}

impl CerBreakdown {
    pub fn total_distance(&self) -> usize {
        self.distances.iter().sum()
    }

    pub fn total_chars(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn value(&self) -> f64 {
        let chars = self.total_chars();
        if chars == 0 {
            0.0
        } else {
            self.total_distance() as f64 / chars as f64
        }
    }
}

pub fn cer_breakdown(labels: &[String], ocr: &OcrResult, matching: CerMatching) -> CerBreakdown {
    let folded: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
    let lengths: Vec<usize> = folded.iter().map(|l| l.chars().count()).collect();
    let candidates: Vec<String> = ocr_candidates(ocr, MAX_CANDIDATE_NGRAM)
        .into_iter()
        .map(|c| normalize_label(&c.text))
        .collect();
    let cost: Vec<Vec<usize>> = folded
        .iter()
        .zip(&lengths)
        .map(|(l, len)| candidates.iter().map(|c| levenshtein(l, c).min(*len)).collect())
        .collect();
    let distances = match matching {
        CerMatching::Independent => cost
            .iter()
            .zip(&lengths)
            .map(|(row, len)| row.iter().copied().min().unwrap_or(*len))
            .collect(),
        CerMatching::Assignment => assignment_distances(&cost, &lengths),
    };
    CerBreakdown { distances, lengths }
}

/// Character error rate: summed capped distances over summed label lengths.
pub fn cer(labels: &[String], ocr: &OcrResult) -> f64 {
    cer_breakdown(labels, ocr, CerMatching::Independent).value()
}

/// Minimum-cost one-to-one matching; an unmatched label costs its length.
fn assignment_distances(cost: &[Vec<usize>], lengths: &[usize]) -> Vec<usize> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    // Square matrix: real candidates, then one "unmatched" column per label;
    // padding rows cost nothing.
    let n = rows + cols;
    let mut m = vec![vec![0i64; n]; n];
    for i in 0..rows {
        for j in 0..n {
            m[i][j] = if j < cols {
                cost[i][j] as i64
            } else {
                lengths[i] as i64
            };
        }
    }
    let assign = hungarian(&m);
    (0..rows).map(|i| m[i][assign[i]] as usize).collect()
}

/// Hungarian algorithm on a square cost matrix; returns the column assigned
/// to each row.
fn hungarian(a: &[Vec<i64>]) -> Vec<usize> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    ans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ocr(words: &[&str]) -> OcrResult {
        OcrResult::new(
            words
                .iter()
                .enumerate()
                .map(|(i, w)| OcrToken {
                    text: w.to_string(),
                    bbox: BBox::new(i as f64 * 10.0, 0.0, 8.0, 8.0),
                })
                .collect(),
        )
    }

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("mitochondria", "mitochndira"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("same", "same"), 0);
        assert_eq!(levenshtein("αβγ", "αγ"), 1);
    }

    #[test]
    fn lem_fractions() {
        let l = labels(&["heart", "lung", "kidney"]);
        assert!((lem(&l, &ocr(&["Heart", "LUNG", "liver"])) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lem(&l, &ocr(&["kidney", "lung", "heart"])), 1.0);
        assert_eq!(lem(&labels(&["small intestine"]), &ocr(&["Small", "intestine"])), 1.0);
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer(&labels(&["cat"]), &ocr(&["cat"])), 0.0);
        assert_eq!(cer(&labels(&["aorta"]), &ocr(&["arota"])), 0.4);
        assert_eq!(cer(&labels(&["mitochondria"]), &OcrResult::default()), 1.0);
    }

    #[test]
    fn cer_uses_ngrams_and_caps() {
        let l = labels(&["small intestine", "xyz"]);
        let b = cer_breakdown(&l, &ocr(&["Small", "intestine", "qqqqqqqqqqq"]), CerMatching::Independent);
        assert_eq!(b.distances, vec![0, 3]);
        assert_eq!(b.lengths, vec![15, 3]);
    }

    #[test]
    fn assignment_never_beats_independent() {
        let l = labels(&["heart", "hearts", "lung"]);
        let o = ocr(&["heart", "lung"]);
        let ind = cer_breakdown(&l, &o, CerMatching::Independent);
        let asg = cer_breakdown(&l, &o, CerMatching::Assignment);
        assert_eq!(ind.distances, vec![0, 1, 0]);
        // "hearts" loses the single "heart" token and falls back to the
        // bigram "heart lung" (distance 5 < unmatched cost 6).
        assert_eq!(asg.distances, vec![0, 5, 0]);
        assert!(asg.total_distance() >= ind.total_distance());
    }

    #[test]
    fn hungarian_small() {
        let a = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let asg = hungarian(&a);
        let total: i64 = asg.iter().enumerate().map(|(i, j)| a[i][*j]).sum();
        assert_eq!(total, 5);
    }
}
