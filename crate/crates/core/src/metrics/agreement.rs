//! Human rating aggregation: Krippendorff's alpha and the visual-appeal
//! composite.
//!
//! Ratings are 1-5 Likert scores in an items x annotators grid. Each cell may
//! also carry four dimension sub-scores (color quality, professional
//! appearance, visual engagement, hierarchy clarity).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DIMENSIONS: [&str; 4] = ["color", "professional", "engagement", "hierarchy"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgreementError {
    #[error("rating {0} outside 1..=5")]
    OutOfRange(u8),
    #[error("need at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("grid rows must all have {expected} cells")]
    Ragged { expected: usize },
    #[error("insufficient units: {0} unit(s) with 2 or more ratings, need 2")]
    InsufficientUnits(usize),
    #[error("no variation among pairable ratings; expected disagreement is zero")]
    NoVariation,
    #[error("dimension sub-scores are missing")]
    MissingDimensions,
    #[error("ratings file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceMetric {
    #[default]
    Ordinal,
    Interval,
}

pub type DimensionScores = [u8; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    items: Vec<String>,
    annotators: Vec<String>,
    cells: Vec<Vec<Option<u8>>>,
    dimensions: Option<Vec<Vec<Option<DimensionScores>>>>,
}

fn check_range(v: u8) -> Result<u8, AgreementError> {
    if (1..=5).contains(&v) {
        Ok(v)
    } else {
        Err(AgreementError::OutOfRange(v))
    }
}

impl RatingMatrix {
    /// Grid of items (rows) by annotators (columns).
    pub fn from_grid(cells: Vec<Vec<Option<u8>>>) -> Result<Self, AgreementError> {
        let annotators = cells.first().map_or(0, Vec::len);
        if annotators < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators));
        }
        if cells.iter().any(|r| r.len() != annotators) {
            return Err(AgreementError::Ragged {
                expected: annotators,
            });
        }
        for v in cells.iter().flatten().flatten() {
            check_range(*v)?;
        }
        Ok(Self {
            items: (0..cells.len()).map(|i| format!("item-{i}")).collect(),
            annotators: (0..annotators).map(|i| format!("annotator-{i}")).collect(),
            cells,
            dimensions: None,
        })
    }

    /// Grid of dimension sub-scores; the overall cell rating is left empty.
    pub fn from_dimension_grid(dims: Vec<Vec<Option<DimensionScores>>>) -> Result<Self, AgreementError> {
        let cells = dims.iter().map(|r| vec![None; r.len()]).collect();
        let mut m = Self::from_grid(cells)?;
        for v in dims.iter().flatten().flatten().flatten() {
            check_range(*v)?;
        }
        m.dimensions = Some(dims);
        Ok(m)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn cells(&self) -> &[Vec<Option<u8>>] {
        &self.cells
    }

    pub fn has_overall_ratings(&self) -> bool {
        self.cells.iter().flatten().any(Option::is_some)
    }

    /// Reorders annotator columns; `order[k]` is the old index of new column `k`.
    pub fn permute_annotators(&self, order: &[usize]) -> Self {
        let pick = |row: &Vec<Option<u8>>| order.iter().map(|&k| row[k]).collect();
        Self {
            items: self.items.clone(),
            annotators: order.iter().map(|&k| self.annotators[k].clone()).collect(),
            cells: self.cells.iter().map(pick).collect(),
            dimensions: self
                .dimensions
                .as_ref()
                .map(|d| d.iter().map(|row| order.iter().map(|&k| row[k]).collect()).collect()),
        }
    }

    /// One unit per (item, dimension), for agreement over sub-scores.
    pub fn dimension_units(&self) -> Result<Self, AgreementError> {
        let dims = self.dimensions.as_ref().ok_or(AgreementError::MissingDimensions)?;
        let mut items = Vec::new();
        let mut cells = Vec::new();
        for (item, row) in self.items.iter().zip(dims) {
            for (d, name) in DIMENSIONS.iter().enumerate() {
                items.push(format!("{item}/{name}"));
                cells.push(row.iter().map(|c| c.map(|s| s[d])).collect());
            }
        }
        Ok(Self {
            items,
            annotators: self.annotators.clone(),
            cells,
            dimensions: None,
        })
    }

    /// Parses long-format CSV with header
    /// `item,annotator,rating[,color,professional,engagement,hierarchy]`.
    /// Empty cells are missing ratings. Items and annotators keep their
    /// order of first appearance.
    pub fn from_csv(text: &str) -> Result<Self, AgreementError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: usize, message: String| AgreementError::Parse { line, message };
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (Some(item_col), Some(annotator_col)) = (col("item"), col("annotator")) else {
            return Err(parse_err(1, "header must contain `item` and `annotator`".into()));
        };
        let rating_col = col("rating");
        let dim_cols: Vec<Option<usize>> = DIMENSIONS.iter().map(|d| col(d)).collect();
        let has_dims = dim_cols.iter().all(Option::is_some);
        if rating_col.is_none() && !has_dims {
            return Err(parse_err(
                1,
                "header needs a `rating` column or all four dimension columns".into(),
            ));
        }

        let mut items: Vec<String> = Vec::new();
        let mut annotators: Vec<String> = Vec::new();
        let mut entries: BTreeMap<(usize, usize), (Option<u8>, Option<DimensionScores>)> = BTreeMap::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            let score = |c: usize| -> Result<Option<u8>, AgreementError> {
                let raw = record.get(c).unwrap_or("");
                if raw.is_empty() {
                    return Ok(None);
                }
                let v: u8 = raw
                    .parse()
                    .map_err(|_| parse_err(line, format!("not a rating: {raw:?}")))?;
                check_range(v).map(Some).map_err(|e| parse_err(line, e.to_string()))
            };
            let item = record.get(item_col).unwrap_or("").to_string();
            let annotator = record.get(annotator_col).unwrap_or("").to_string();
            let i = position_or_push(&mut items, item);
            let a = position_or_push(&mut annotators, annotator);
            let rating = rating_col.map(score).transpose()?.flatten();
            let dims = if has_dims {
                let mut s = [0u8; 4];
                let mut complete = true;
                for (k, c) in dim_cols.iter().enumerate() {
                    match score(c.expect("checked"))? {
                        Some(v) => s[k] = v,
                        None => complete = false,
                    }
                }
                complete.then_some(s)
            } else {
                None
            };
            if entries.insert((i, a), (rating, dims)).is_some() {
                return Err(parse_err(line, "duplicate (item, annotator) pair".into()));
            }
        }
        if annotators.len() < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators.len()));
        }
        let mut cells = vec![vec![None; annotators.len()]; items.len()];
        let mut dims = vec![vec![None; annotators.len()]; items.len()];
        for ((i, a), (r, d)) in entries {
            cells[i][a] = r;
            dims[i][a] = d;
        }
        Ok(Self {
            items,
            annotators,
            cells,
            dimensions: has_dims.then_some(dims),
        })
    }
}

fn position_or_push(v: &mut Vec<String>, s: String) -> usize {
    match v.iter().position(|x| *x == s) {
        Some(i) => i,
        None => {
            v.push(s);
            v.len() - 1
        }
    }
}

/// Krippendorff's alpha, `1 - D_o / D_e`, via the coincidence matrix.
/// Units with fewer than two ratings are not pairable and are ignored.
pub fn krippendorff_alpha(ratings: &RatingMatrix, metric: DifferenceMetric) -> Result<f64, AgreementError> {
    const K: usize = 5;
    let mut coincidence = [[0.0f64; K]; K];
    let mut pairable_units = 0;
    for row in &ratings.cells {
        let values: Vec<usize> = row.iter().flatten().map(|v| usize::from(*v) - 1).collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (m as f64 - 1.0);
        for (i, &c) in values.iter().enumerate() {
            for (j, &k) in values.iter().enumerate() {
                if i != j {
                    coincidence[c][k] += w;
                }
            }
        }
    }
    if pairable_units < 2 {
        return Err(AgreementError::InsufficientUnits(pairable_units));
    }
    let marginals: Vec<f64> = coincidence.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let delta2 = |c: usize, k: usize| -> f64 {
        match metric {
            DifferenceMetric::Interval => {
                let d = c as f64 - k as f64;
                d * d
            }
            DifferenceMetric::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let s: f64 = marginals[lo..=hi].iter().sum::<f64>() - (marginals[c] + marginals[k]) / 2.0;
                s * s
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..K {
        for k in 0..K {
            let d = delta2(c, k);
            observed += coincidence[c][k] * d;
            expected += marginals[c] * marginals[k] * d;
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        return Err(AgreementError::NoVariation);
    }
    Ok(1.0 - d_o / d_e)
}

/// Mean over items of each item's mean dimension score (over all four
/// dimensions and all annotators who rated it).
pub fn hva_composite(ratings: &RatingMatrix) -> Result<f64, AgreementError> {
    let dims = ratings.dimensions.as_ref().ok_or(AgreementError::MissingDimensions)?;
    let per_item: Vec<f64> = dims
        .iter()
        .filter_map(|row| {
            let scores: Vec<f64> = row.iter().flatten().flatten().map(|v| f64::from(*v)).collect();
            (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
        })
        .collect();
    if per_item.is_empty() {
        return Err(AgreementError::MissingDimensions);
    }
    Ok(per_item.iter().sum::<f64>() / per_item.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[u8]]) -> RatingMatrix {
        RatingMatrix::from_grid(rows.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect()).unwrap()
    }

    #[test]
    fn perfect_agreement() {
        let m = grid(&[&[1, 1, 1], &[3, 3, 3], &[5, 5, 5], &[2, 2, 2]]);
        assert_eq!(krippendorff_alpha(&m, DifferenceMetric::Ordinal).unwrap(), 1.0);
        assert_eq!(krippendorff_alpha(&m, DifferenceMetric::Interval).unwrap(), 1.0);
    }

    #[test]
    fn two_by_four_interval() {
        let m = grid(&[&[1, 1], &[2, 2], &[3, 3], &[4, 5]]);
        let a = krippendorff_alpha(&m, DifferenceMetric::Interval).unwrap();
        assert!((a - 104.0 / 111.0).abs() < 1e-12, "{a}");
    }

    #[test]
    fn single_unit_is_insufficient() {
        let m = grid(&[&[1, 2]]);
        assert_eq!(
            krippendorff_alpha(&m, DifferenceMetric::Ordinal).unwrap_err(),
            AgreementError::InsufficientUnits(1)
        );
    }

    #[test]
    fn constant_ratings_have_no_variation() {
        let m = grid(&[&[3, 3], &[3, 3]]);
        assert_eq!(
            krippendorff_alpha(&m, DifferenceMetric::Interval).unwrap_err(),
            AgreementError::NoVariation
        );
    }

    #[test]
    fn range_checked() {
        assert_eq!(
            RatingMatrix::from_grid(vec![vec![Some(6), Some(1)]]).unwrap_err(),
            AgreementError::OutOfRange(6)
        );
        assert!(RatingMatrix::from_grid(vec![vec![Some(1)]]).is_err());
    }

    #[test]
    fn composite_means() {
        let all4 = RatingMatrix::from_dimension_grid(vec![vec![Some([4; 4]); 3]; 5]).unwrap();
        assert_eq!(hva_composite(&all4).unwrap(), 4.0);
        let two = RatingMatrix::from_dimension_grid(vec![vec![Some([3; 4]); 2], vec![Some([5; 4]); 2]]).unwrap();
        assert_eq!(hva_composite(&two).unwrap(), 4.0);
        // item means 2.5 (over 8 scores) and 4.25 (one annotator missing)
        let mixed = RatingMatrix::from_dimension_grid(vec![
            vec![Some([1, 2, 3, 4]), Some([2, 3, 2, 3])],
            vec![Some([5, 4, 4, 4]), None],
        ])
        .unwrap();
        assert!((hva_composite(&mixed).unwrap() - (2.5 + 4.25) / 2.0).abs() < 1e-15);
        assert_eq!(hva_composite(&grid(&[&[1, 2]])).unwrap_err(), AgreementError::MissingDimensions);
    }

    #[test]
    fn csv_long_format() {
        let text = "item,annotator,rating,color,professional,engagement,hierarchy
d1,ann-a,4,4,4,5,3
d1,ann-b,5,5,5,5,5
d2,ann-a,2,,,,
d2,ann-b,,2,2,3,3
";
        let m = RatingMatrix::from_csv(text).unwrap();
        assert_eq!(m.items(), ["d1", "d2"]);
        assert_eq!(m.annotators(), ["ann-a", "ann-b"]);
        assert_eq!(m.cells(), [vec![Some(4), Some(5)], vec![Some(2), None]]);
        let hva = hva_composite(&m).unwrap();
        assert!((hva - (36.0 / 8.0 + 2.5) / 2.0).abs() < 1e-15);
        let units = m.dimension_units().unwrap();
        assert_eq!(units.items().len(), 8);

        let bad = "item,annotator,rating\nd1,a,9\n";
        assert!(matches!(RatingMatrix::from_csv(bad), Err(AgreementError::Parse { line: 2, .. })));
    }
}
