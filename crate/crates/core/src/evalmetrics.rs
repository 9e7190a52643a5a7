//! Validation statistics: precision@K, Spearman correlation, Likert
//! aggregation and ICC(3,1).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("duplicate id {0:?} in ranked list")]
    DuplicateId(String),
    #[error("k = {k} outside [1, {len}]")]
    KOutOfRange { k: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} values, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("zero rank variance")]
    ZeroVariance,
    #[error("{field} = {value} outside 1..=5")]
    LikertRange { field: &'static str, value: i64 },
    #[error("rating matrix must be rectangular with >= 2 targets and >= 2 raters")]
    BadShape,
    #[error("rating matrix has non-finite cells")]
    NonFinite,
    #[error("degenerate matrix")]
    Degenerate,
    #[error("missing rating for target {target:?} by rater {rater:?}")]
    MissingCell { target: String, rater: String },
    #[error("duplicate rating for target {target:?} by rater {rater:?}")]
    DuplicateCell { target: String, rater: String },
}

/// Item ids in descending score order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList(Vec<String>);

impl RankedList {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self, MetricError> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(MetricError::DuplicateId(id.clone()));
            }
        }
        Ok(RankedList(ids))
    }

    pub fn ids(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fraction of the top `k` ids found in `relevant`.
pub fn precision_at_k(ranked: &RankedList, relevant: &HashSet<String>, k: usize) -> Result<f64, MetricError> {
    if k == 0 || k > ranked.len() {
        return Err(MetricError::KOutOfRange { k, len: ranked.len() });
    }
    let hits = ranked.0[..k].iter().filter(|id| relevant.contains(*id)).count();
    Ok(hits as f64 / k as f64)
}

/// 1-based ranks, ties sharing the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricError::TooFew { min: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One rater's five-point judgement of a generated angle set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertRating {
    pub rater_id: String,
    pub target_id: String,
    pub fluency: i64,
    pub accuracy: i64,
    pub angle_quality: i64,
}

impl LikertRating {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (field, value) in [
            ("fluency", self.fluency),
            ("accuracy", self.accuracy),
            ("angle_quality", self.angle_quality),
        ] {
            if !(1..=5).contains(&value) {
                return Err(MetricError::LikertRange { field, value });
            }
        }
        Ok(())
    }
}

/// Mean of fluency, accuracy and angle quality.
pub fn overall_quality(rating: &LikertRating) -> Result<f64, MetricError> {
    rating.validate()?;
    Ok((rating.fluency + rating.accuracy + rating.angle_quality) as f64 / 3.0)
}

/// Targets by raters; every cell present.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 || k < 2 || rows.iter().any(|r| r.len() != k) {
            return Err(MetricError::BadShape);
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(RatingMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_targets(&self) -> usize {
        self.rows.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rows[0].len()
    }

    /// Builds a targets × raters matrix of overall quality from ratings.
    /// Targets and raters are ordered by id.
    pub fn from_ratings(ratings: &[LikertRating]) -> Result<Self, MetricError> {
        let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        let mut raters = BTreeSet::new();
        let mut targets = BTreeSet::new();
        for r in ratings {
            let q = overall_quality(r)?;
            if cells.insert((&r.target_id, &r.rater_id), q).is_some() {
                return Err(MetricError::DuplicateCell {
                    target: r.target_id.clone(),
                    rater: r.rater_id.clone(),
                });
            }
            raters.insert(r.rater_id.as_str());
            targets.insert(r.target_id.as_str());
        }
        let mut rows = Vec::with_capacity(targets.len());
        for t in &targets {
            let mut row = Vec::with_capacity(raters.len());
            for rater in &raters {
                match cells.get(&(*t, *rater)) {
                    Some(v) => row.push(*v),
                    None => {
                        return Err(MetricError::MissingCell {
                            target: t.to_string(),
                            rater: rater.to_string(),
                        })
                    }
                }
            }
            rows.push(row);
        }
        RatingMatrix::new(rows)
    }
}

/// ICC(3,1): two-way mixed effects, consistency, single rater.
/// Unclamped; may be negative.
pub fn icc_consistency(matrix: &RatingMatrix) -> Result<f64, MetricError> {
    let n = matrix.n_targets();
    let k = matrix.n_raters();
    let rows = matrix.rows();
    let grand = rows.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();

    let ss_rows: f64 = row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() * k as f64;
    let mut ss_err = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let resid = v - row_means[i] - col_means[j] + grand;
            ss_err += resid * resid;
        }
    }
    let ms_r = ss_rows / (n - 1) as f64;
    let ms_e = ss_err / ((n - 1) * (k - 1)) as f64;
    // Relative guard so a constant matrix with rounding noise still reads as degenerate.
    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if ms_r <= 1e-24 * scale * scale {
        return Err(MetricError::Degenerate);
    }
    Ok((ms_r - ms_e) / (ms_r + (k - 1) as f64 * ms_e))
}

/// Parses newline-delimited [`LikertRating`] objects. Blank lines are
/// skipped; errors carry the 1-based line number.
pub fn parse_ratings(text: &str) -> Result<Vec<LikertRating>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rating: LikertRating = serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
        rating.validate().map_err(|e| (i + 1, e.to_string()))?;
        out.push(rating);
    }
    Ok(out)
}
