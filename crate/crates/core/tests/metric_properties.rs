use cage_core::benchmark::{manifest_to_string, parse_manifest, DiagramPrompt, GradeBand, Subject};
use cage_core::geometry::BBox;
use cage_core::metrics::{
    cer, cer_breakdown, effective_cost, fid, krippendorff_alpha, lem, levenshtein, matrix_sqrt_psd,
    CerMatching, CostScenario, DifferenceMetric, FeatureSet, OcrResult, OcrToken, RatingMatrix,
    RetryModel,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

/// Full-table Wagner-Fischer.
fn dp_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

fn tokens(words: &[&str]) -> OcrResult {
    OcrResult::new(
        words
            .iter()
            .enumerate()
            .map(|(i, w)| OcrToken {
                text: w.to_string(),
                bbox: BBox::new(i as f64 * 50.0, 0.0, 40.0, 12.0),
            })
            .collect(),
    )
}

#[test]
fn levenshtein_matches_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let alphabet: Vec<char> = "abcdeéß ".chars().collect();
    let word = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(0..14);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    for _ in 0..1000 {
        let (a, b) = (word(&mut rng), word(&mut rng));
        assert_eq!(levenshtein(&a, &b), dp_oracle(&a, &b), "{a:?} {b:?}");
    }
}

proptest! {
    #[test]
    fn levenshtein_is_a_metric(a in "[a-d]{0,10}", b in "[a-d]{0,10}", c in "[a-d]{0,10}") {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn cer_is_bounded(
        labels in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,6})?", 1..6),
        words in proptest::collection::vec("[a-z]{1,9}", 0..10),
    ) {
        let ocr = tokens(&words.iter().map(String::as_str).collect::<Vec<_>>());
        for m in [CerMatching::Independent, CerMatching::Assignment] {
            let v = cer_breakdown(&labels, &ocr, m).value();
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(
            cer_breakdown(&labels, &ocr, CerMatching::Independent).total_distance()
                <= cer_breakdown(&labels, &ocr, CerMatching::Assignment).total_distance()
        );
    }

    #[test]
    fn lem_and_cer_ignore_case_and_spacing(
        labels in proptest::collection::vec("[a-z]{1,8}", 1..5),
        words in proptest::collection::vec("[a-z]{1,8}", 1..8),
    ) {
        let plain = tokens(&words.iter().map(String::as_str).collect::<Vec<_>>());
        let shouty: Vec<String> = words.iter().map(|w| format!("  {}\t", w.to_uppercase())).collect();
        let loud = tokens(&shouty.iter().map(String::as_str).collect::<Vec<_>>());
        prop_assert_eq!(lem(&labels, &plain), lem(&labels, &loud));
        prop_assert_eq!(cer(&labels, &plain), cer(&labels, &loud));
    }

    #[test]
    fn fid_is_symmetric_and_nonnegative(
        a in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 3..8),
        b in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 3..8),
    ) {
        let (fa, fb) = (FeatureSet::new(&a).unwrap(), FeatureSet::new(&b).unwrap());
        let ab = fid(&fa, &fb).unwrap();
        let ba = fid(&fb, &fa).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1.0), "{} vs {}", ab, ba);
        prop_assert!(fid(&fa, &fa).unwrap() <= 1e-6);
    }

    #[test]
    fn alpha_invariant_under_annotator_permutation(
        rows in proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.85, 1u8..=5), 4), 3..10),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let m = RatingMatrix::from_grid(rows).unwrap();
        for metric in [DifferenceMetric::Ordinal, DifferenceMetric::Interval] {
            match (krippendorff_alpha(&m, metric), krippendorff_alpha(&m.permute_annotators(&perm), metric)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
            }
        }
    }

    #[test]
    fn cost_is_linear(cents in 1u32..1000, k in 1u32..20, teachers in 1u32..500, r in 0u32..90) {
        let price = Decimal::new(i64::from(cents), 3);
        let rate = Decimal::new(i64::from(r), 2);
        let mut s = CostScenario::classroom("s", price).with_regen(rate, RetryModel::SingleRetry);
        s.teachers = teachers;
        let base = effective_cost(&s).unwrap();
        let mut scaled = s.clone();
        scaled.per_image = price * Decimal::from(k);
        prop_assert_eq!(effective_cost(&scaled).unwrap().per_school_year, base.per_school_year * Decimal::from(k));
        let mut more = s.clone();
        more.teachers = teachers * k;
        prop_assert_eq!(effective_cost(&more).unwrap().per_school_year, base.per_school_year * Decimal::from(k));
    }

    #[test]
    fn manifest_roundtrip(
        items in proptest::collection::vec(
            ("[a-z]{1,6}-[0-9]{1,3}", 0usize..4, 0usize..3, "[A-Za-z ]{1,20}", proptest::collection::vec("[a-zA-Z\"\\\\ ]{1,12}", 1..6)),
            1..8,
        )
    ) {
        let grades = [GradeBand::K5, GradeBand::G6to8, GradeBand::G9to12];
        let prompts: Vec<DiagramPrompt> = items
            .into_iter()
            .filter(|(_, _, _, topic, _)| !topic.trim().is_empty())
            .map(|(id, s, g, topic, labels)| {
                DiagramPrompt::new(id, Subject::ALL[s], grades[g], topic.clone(), labels, format!("Draw {topic}")).unwrap()
            })
            .collect();
        let text = manifest_to_string(&prompts);
        prop_assert_eq!(parse_manifest(&text).unwrap(), prompts);
    }
}

#[test]
fn matrix_sqrt_reconstructs_random_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50 {
        let n: usize = 1 + (i * 63) / 49;
        let rank = if i % 5 == 0 { n.div_ceil(2) } else { n };
        let b = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose();
        let r = matrix_sqrt_psd(&a).unwrap();
        let err = (&r * &r - &a).norm() / a.norm();
        assert!(err < 1e-8, "n={n} rank={rank} err={err:e}");
    }
}

#[test]
fn fid_closed_forms() {
    let one_d = |v: &[f64]| FeatureSet::new(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
    let d = fid(&one_d(&[-1.0, 0.0, 1.0]), &one_d(&[2.0, 3.0, 4.0])).unwrap();
    assert!((d - 9.0).abs() < 1e-6);
    let d = fid(&one_d(&[-2.0, 0.0, 2.0]), &one_d(&[-1.0, 0.0, 1.0])).unwrap();
    assert!((d - 1.0).abs() < 1e-6);
}

/// Pairwise form of interval alpha: within-unit squared differences weighted
/// by `1/(m_u - 1)` against all cross-pair squared differences.
fn interval_alpha_oracle(rows: &[Vec<Option<u8>>]) -> Option<f64> {
    let units: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().flatten().map(|v| f64::from(*v)).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.len() < 2 {
        return None;
    }
    let pooled: Vec<f64> = units.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let mut within = 0.0;
    for u in &units {
        let mut s = 0.0;
        for a in u {
            for b in u {
                s += (a - b).powi(2);
            }
        }
        within += s / (u.len() as f64 - 1.0);
    }
    let mut total = 0.0;
    for a in &pooled {
        for b in &pooled {
            total += (a - b).powi(2);
        }
    }
    (total > 0.0).then(|| 1.0 - (n - 1.0) * within / total)
}

#[test]
fn alpha_fixed_points() {
    let full = |rows: &[&[u8]]| {
        RatingMatrix::from_grid(rows.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect()).unwrap()
    };
    let m = full(&[&[2, 2, 2], &[4, 4, 4], &[1, 1, 1]]);
    assert_eq!(krippendorff_alpha(&m, DifferenceMetric::Ordinal).unwrap(), 1.0);
    let m = full(&[&[1, 1], &[2, 2], &[3, 3], &[4, 5]]);
    let a = krippendorff_alpha(&m, DifferenceMetric::Interval).unwrap();
    assert!((a - 104.0 / 111.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn interval_alpha_matches_pairwise_oracle(
        rows in proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.8, 1u8..=5), 3), 2..12),
    ) {
        let m = RatingMatrix::from_grid(rows.clone()).unwrap();
        match (krippendorff_alpha(&m, DifferenceMetric::Interval), interval_alpha_oracle(&rows)) {
            (Ok(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }
}
