//! News-value aggregation and the regression forest that predicts
//! newsworthiness (0 to 100) from text features.
//!
//! Model files are JSON:
//!
//! ```json
//! {"schema_version": "...", "n_features": 48,
//!  "trees": [{"f": 0, "t": 0.5, "l": {"v": 10.0}, "r": {"v": 90.0}}]}
//! ```
//!
//! Prediction descends left when `feature <= threshold` and averages the
//! leaf values reached in each tree, clamped to [0, 100].

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textfeat::FeatureVector;

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("news value {component} = {value} is outside [0, 100]")]
    RatingOutOfRange { component: &'static str, value: f64 },
    #[error("feature arity {got} does not match model arity {expected}")]
    Arity { expected: usize, got: usize },
    #[error("feature schema {got:?} does not match model schema {expected:?}")]
    Schema { expected: String, got: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training input: {0}")]
    InvalidTraining(String),
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
}

/// The four news values, each on a 0 to 100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsValueRatings {
    pub actuality: f64,
    pub controversy: f64,
    pub impact_magnitude: f64,
    pub impact_valence: f64,
}

impl NewsValueRatings {
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("actuality", self.actuality),
            ("controversy", self.controversy),
            ("impact_magnitude", self.impact_magnitude),
            ("impact_valence", self.impact_valence),
        ]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (component, value) in self.components() {
            if !(SCORE_MIN..=SCORE_MAX).contains(&value) {
                return Err(ModelError::RatingOutOfRange { component, value });
            }
        }
        Ok(())
    }
}

/// How the four news values combine into one score.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    /// Weighted mean in component order; weights must be nonnegative with a
    /// positive sum.
    Weighted([f64; 4]),
}

/// Unweighted mean of the four news values.
pub fn aggregate_news_values(ratings: &NewsValueRatings) -> Result<f64, ModelError> {
    aggregate_with(ratings, Aggregation::Mean)
}

pub fn aggregate_with(ratings: &NewsValueRatings, aggregation: Aggregation) -> Result<f64, ModelError> {
    ratings.validate()?;
    let values = ratings.components().map(|(_, v)| v);
    match aggregation {
        Aggregation::Mean => Ok(values.iter().sum::<f64>() / 4.0),
        Aggregation::Weighted(w) => {
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || total <= 0.0 {
                return Err(ModelError::InvalidTraining(format!("bad aggregation weights {w:?}")));
            }
            let s: f64 = values.iter().zip(w).map(|(v, w)| v * w).sum();
            Ok((s / total).clamp(SCORE_MIN, SCORE_MAX))
        }
    }
}

/// A regression tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "v")]
        value: f64,
    },
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf { value }
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf value reached by `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn visit_leaves(&self, f: &mut impl FnMut(f64)) {
        match self {
            TreeNode::Leaf { value } => f(*value),
            TreeNode::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    fn check(&self, n_features: usize) -> Result<(), String> {
        match self {
            TreeNode::Leaf { value } => {
                if (SCORE_MIN..=SCORE_MAX).contains(value) {
                    Ok(())
                } else {
                    Err(format!("leaf value {value} outside [0, 100]"))
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(format!("feature index {feature} >= n_features {n_features}"));
                }
                if !threshold.is_finite() {
                    return Err(format!("non-finite threshold on feature {feature}"));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
        }
    }
}

/// A bagged regression forest over one feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestModel {
    pub schema_version: String,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    pub fn new(schema_version: impl Into<String>, n_features: usize, trees: Vec<TreeNode>) -> Result<Self, ModelError> {
        let model = ForestModel {
            schema_version: schema_version.into(),
            n_features,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.trees.is_empty() {
            return Err(ModelError::InvalidModel("forest has no trees".into()));
        }
        for (i, tree) in self.trees.iter().enumerate() {
            tree.check(self.n_features)
                .map_err(|m| ModelError::InvalidModel(format!("tree {i}: {m}")))?;
        }
        Ok(())
    }

    /// Smallest and largest leaf value across all trees.
    pub fn leaf_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.trees {
            t.visit_leaves(&mut |v| {
                lo = lo.min(v);
                hi = hi.max(v);
            });
        }
        (lo, hi)
    }

    /// Mean leaf value over trees for a raw feature slice.
    pub fn predict_values(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::Arity {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok((sum / self.trees.len() as f64).clamp(SCORE_MIN, SCORE_MAX))
    }

    /// Batch prediction over raw feature rows, in input order.
    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        crate::par::try_map(rows, |x| self.predict_values(x))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let model = ForestModel::deserialize(&mut de).map_err(|e| ModelError::InvalidModel(e.to_string()))?;
        de.end().map_err(|e| ModelError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }
}

/// Predicts newsworthiness for one article's features.
pub fn predict(model: &ForestModel, features: &FeatureVector) -> Result<f64, ModelError> {
    if features.schema_version != model.schema_version {
        return Err(ModelError::Schema {
            expected: model.schema_version.clone(),
            got: features.schema_version.clone(),
        });
    }
    model.predict_values(&features.values)
}

/// Training settings for [`fit_forest`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap_seed: u64,
    /// Features considered per split; values at or above the arity mean all.
    pub features_per_split: usize,
    /// Resample rows with replacement per tree. When false every tree sees
    /// the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            bootstrap_seed: 0,
            features_per_split: 16,
            bootstrap: true,
        }
    }
}

pub const MAX_DEPTH_LIMIT: usize = 64;

/// Fits a bagged CART regression forest.
///
/// Tree `i` draws from a ChaCha8 stream `(seed, i)`, so the forest is the
/// same whether trees are grown sequentially or in parallel. Splits
/// minimize the summed squared error of the two children; among equal
/// candidates the lowest feature index, then the lowest threshold wins.
pub fn fit_forest(
    labeled: &[(FeatureVector, f64)],
    params: &ForestParams,
) -> Result<ForestModel, ModelError> {
    if labeled.len() < 2 {
        return Err(ModelError::InvalidTraining(format!(
            "need at least 2 labeled examples, got {}",
            labeled.len()
        )));
    }
    if params.n_trees == 0 || params.min_leaf == 0 || params.features_per_split == 0 {
        return Err(ModelError::InvalidTraining(
            "n_trees, min_leaf and features_per_split must be positive".into(),
        ));
    }
    if params.max_depth > MAX_DEPTH_LIMIT {
        return Err(ModelError::InvalidTraining(format!("max_depth above {MAX_DEPTH_LIMIT}")));
    }
    let schema_version = labeled[0].0.schema_version.clone();
    let n_features = labeled[0].0.arity();
    for (i, (fv, y)) in labeled.iter().enumerate() {
        if fv.schema_version != schema_version || fv.arity() != n_features {
            return Err(ModelError::InvalidTraining(format!("example {i} has a different feature schema")));
        }
        if !(SCORE_MIN..=SCORE_MAX).contains(y) {
            return Err(ModelError::InvalidTraining(format!("label {y} of example {i} outside [0, 100]")));
        }
        if fv.values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidTraining(format!("example {i} has non-finite features")));
        }
    }
    let xs: Vec<&[f64]> = labeled.iter().map(|(fv, _)| fv.values.as_slice()).collect();
    let ys: Vec<f64> = labeled.iter().map(|(_, y)| *y).collect();

    let trees = crate::par::map_range(params.n_trees, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.bootstrap_seed);
        rng.set_stream(i as u64);
        let rows: Vec<usize> = if params.bootstrap {
            (0..xs.len()).map(|_| rng.gen_range(0..xs.len())).collect()
        } else {
            (0..xs.len()).collect()
        };
        let grower = Grower {
            xs: &xs,
            ys: &ys,
            n_features,
            params,
        };
        grower.grow(rows, 0, &mut rng)
    });
    ForestModel::new(schema_version, n_features, trees)
}

struct Grower<'a> {
    xs: &'a [&'a [f64]],
    ys: &'a [f64],
    n_features: usize,
    params: &'a ForestParams,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn grow(&self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| self.ys[r]).sum();
        let mean = (sum / n).clamp(SCORE_MIN, SCORE_MAX);
        let first = self.ys[rows[0]];
        let constant = rows.iter().all(|&r| self.ys[r] == first);
        if constant || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return TreeNode::leaf(if constant { first } else { mean });
        }

        let features: Vec<usize> = if self.params.features_per_split >= self.n_features {
            (0..self.n_features).collect()
        } else {
            let mut f = sample(rng, self.n_features, self.params.features_per_split).into_vec();
            f.sort_unstable();
            f
        };

        // Minimizing children SSE equals maximizing sum_l^2/n_l + sum_r^2/n_r.
        let parent_score = sum * sum / n;
        let mut best: Option<Candidate> = None;
        let mut sorted = rows.clone();
        for &f in &features {
            sorted.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let mut left_sum = 0.0;
            for i in 0..sorted.len() - 1 {
                left_sum += self.ys[sorted[i]];
                let n_left = i + 1;
                let n_right = sorted.len() - n_left;
                let lo = self.xs[sorted[i]][f];
                let hi = self.xs[sorted[i + 1]][f];
                if lo == hi || n_left < self.params.min_leaf || n_right < self.params.min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }

        match best {
            Some(c) if c.score > parent_score => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| self.xs[r][c.feature] <= c.threshold);
                let l = self.grow(left, depth + 1, rng);
                let r = self.grow(right, depth + 1, rng);
                TreeNode::split(c.feature, c.threshold, l, r)
            }
            _ => TreeNode::leaf(mean),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            schema_version: "test".into(),
            values,
        }
    }

    fn ratings(a: f64, c: f64, m: f64, v: f64) -> NewsValueRatings {
        NewsValueRatings {
            actuality: a,
            controversy: c,
            impact_magnitude: m,
            impact_valence: v,
        }
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_news_values(&ratings(50.0, 50.0, 50.0, 50.0)).unwrap(), 50.0);
        assert_eq!(aggregate_news_values(&ratings(100.0, 0.0, 0.0, 0.0)).unwrap(), 25.0);
        assert_eq!(aggregate_news_values(&ratings(80.0, 60.0, 90.0, 70.0)).unwrap(), 75.0);
    }

    #[test]
    fn aggregation_names_bad_component() {
        let err = aggregate_news_values(&ratings(10.0, 101.0, 0.0, 0.0)).unwrap_err();
        assert_eq!(
            err,
            ModelError::RatingOutOfRange {
                component: "controversy",
                value: 101.0
            }
        );
        assert!(aggregate_news_values(&ratings(f64::NAN, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn weighted_aggregation() {
        let r = ratings(100.0, 0.0, 0.0, 0.0);
        assert_eq!(aggregate_with(&r, Aggregation::Weighted([1.0, 1.0, 1.0, 1.0])).unwrap(), 25.0);
        assert_eq!(aggregate_with(&r, Aggregation::Weighted([3.0, 1.0, 0.0, 0.0])).unwrap(), 75.0);
        assert!(aggregate_with(&r, Aggregation::Weighted([0.0; 4])).is_err());
    }

    #[test]
    fn constant_leaf_model() {
        let m = ForestModel::new("test", 3, vec![TreeNode::leaf(42.0)]).unwrap();
        assert_eq!(predict(&m, &fv(vec![1.0, 2.0, 3.0])).unwrap(), 42.0);
        assert_eq!(predict(&m, &fv(vec![-9.0, 0.0, 1e9])).unwrap(), 42.0);
    }

    #[test]
    fn one_split_walk() {
        let tree = TreeNode::split(0, 0.5, TreeNode::leaf(10.0), TreeNode::leaf(90.0));
        let m = ForestModel::new("test", 1, vec![tree]).unwrap();
        assert_eq!(predict(&m, &fv(vec![0.3])).unwrap(), 10.0);
        assert_eq!(predict(&m, &fv(vec![0.5])).unwrap(), 10.0);
        assert_eq!(predict(&m, &fv(vec![0.7])).unwrap(), 90.0);
    }

    #[test]
    fn two_trees_average() {
        let m = ForestModel::new("test", 1, vec![TreeNode::leaf(10.0), TreeNode::leaf(90.0)]).unwrap();
        assert_eq!(predict(&m, &fv(vec![0.0])).unwrap(), 50.0);
    }

    #[test]
    fn arity_and_schema_mismatch() {
        let m = ForestModel::new("test", 2, vec![TreeNode::leaf(1.0)]).unwrap();
        assert_eq!(
            predict(&m, &fv(vec![0.0])),
            Err(ModelError::Arity { expected: 2, got: 1 })
        );
        let other = FeatureVector {
            schema_version: "v2".into(),
            values: vec![0.0, 0.0],
        };
        assert!(matches!(predict(&m, &other), Err(ModelError::Schema { .. })));
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(ForestModel::new("t", 1, vec![]).is_err());
        assert!(ForestModel::new("t", 1, vec![TreeNode::split(1, 0.0, TreeNode::leaf(1.0), TreeNode::leaf(2.0))]).is_err());
        assert!(ForestModel::new("t", 1, vec![TreeNode::leaf(120.0)]).is_err());
        assert!(ForestModel::from_json(r#"{"schema_version":"t","n_features":1,"trees":[{"x":1}]}"#).is_err());
    }

    #[test]
    fn json_format() {
        let tree = TreeNode::split(0, 0.5, TreeNode::leaf(10.0), TreeNode::leaf(90.0));
        let m = ForestModel::new("s", 1, vec![tree]).unwrap();
        assert_eq!(
            m.to_json(),
            r#"{"schema_version":"s","n_features":1,"trees":[{"f":0,"t":0.5,"l":{"v":10.0},"r":{"v":90.0}}]}"#
        );
        assert_eq!(ForestModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn deep_model_round_trips() {
        let mut tree = TreeNode::leaf(1.0);
        for _ in 0..200 {
            tree = TreeNode::split(0, 0.0, tree, TreeNode::leaf(2.0));
        }
        let m = ForestModel::new("s", 1, vec![tree]).unwrap();
        assert_eq!(ForestModel::from_json(&m.to_json()).unwrap().trees[0].depth(), 200);
    }

    fn separable() -> Vec<(FeatureVector, f64)> {
        vec![(fv(vec![0.0]), 0.0), (fv(vec![1.0]), 100.0)]
    }

    #[test]
    fn fit_separable_toy() {
        let params = ForestParams {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            bootstrap_seed: 7,
            features_per_split: 1,
            bootstrap: false,
        };
        let m = fit_forest(&separable(), &params).unwrap();
        assert_eq!(m.trees, vec![TreeNode::split(0, 0.5, TreeNode::leaf(0.0), TreeNode::leaf(100.0))]);
        assert_eq!(predict(&m, &fv(vec![0.0])).unwrap(), 0.0);
        assert_eq!(predict(&m, &fv(vec![1.0])).unwrap(), 100.0);
    }

    #[test]
    fn fit_constant_labels() {
        let data: Vec<_> = (0..20).map(|i| (fv(vec![i as f64, (i * 7 % 5) as f64]), 60.0)).collect();
        let m = fit_forest(&data, &ForestParams::default()).unwrap();
        for i in 0..30 {
            assert_eq!(predict(&m, &fv(vec![i as f64 - 5.0, 1.0])).unwrap(), 60.0);
        }
    }

    #[test]
    fn fit_is_seed_deterministic() {
        let data: Vec<_> = (0..60)
            .map(|i| {
                let x = vec![(i % 7) as f64, (i % 11) as f64 / 3.0, (i * i % 13) as f64];
                let y = (x[0] * 10.0 + x[1] * 5.0).min(100.0);
                (fv(x), y)
            })
            .collect();
        let params = ForestParams {
            n_trees: 12,
            max_depth: 5,
            min_leaf: 2,
            bootstrap_seed: 99,
            features_per_split: 2,
            bootstrap: true,
        };
        let a = fit_forest(&data, &params).unwrap().to_json();
        let b = fit_forest(&data, &params).unwrap().to_json();
        assert_eq!(a, b);
        let c = fit_forest(&data, &ForestParams { bootstrap_seed: 100, ..params }).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn split_ties_prefer_lowest_feature() {
        // features 0 and 1 are identical, so both give the same best split
        let data = vec![
            (fv(vec![0.0, 0.0]), 10.0),
            (fv(vec![1.0, 1.0]), 10.0),
            (fv(vec![2.0, 2.0]), 90.0),
            (fv(vec![3.0, 3.0]), 90.0),
        ];
        let params = ForestParams {
            n_trees: 1,
            max_depth: 3,
            min_leaf: 1,
            bootstrap_seed: 0,
            features_per_split: 2,
            bootstrap: false,
        };
        let m = fit_forest(&data, &params).unwrap();
        assert_eq!(m.trees[0], TreeNode::split(0, 1.5, TreeNode::leaf(10.0), TreeNode::leaf(90.0)));
    }

    #[test]
    fn min_leaf_respected() {
        let data: Vec<_> = (0..10).map(|i| (fv(vec![i as f64]), i as f64 * 10.0)).collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: 10,
            min_leaf: 3,
            bootstrap_seed: 0,
            features_per_split: 1,
            bootstrap: false,
        };
        let m = fit_forest(&data, &params).unwrap();
        fn leaf_sizes(t: &TreeNode, rows: Vec<f64>, out: &mut Vec<usize>) {
            match t {
                TreeNode::Leaf { .. } => out.push(rows.len()),
                TreeNode::Split { threshold, left, right, .. } => {
                    let (l, r): (Vec<f64>, Vec<f64>) = rows.into_iter().partition(|x| x <= threshold);
                    leaf_sizes(left, l, out);
                    leaf_sizes(right, r, out);
                }
            }
        }
        let mut sizes = Vec::new();
        leaf_sizes(&m.trees[0], (0..10).map(|i| i as f64).collect(), &mut sizes);
        assert!(sizes.iter().all(|&s| s >= 3), "{sizes:?}");
    }

    #[test]
    fn training_input_errors() {
        assert!(fit_forest(&separable()[..1], &ForestParams::default()).is_err());
        let bad = vec![(fv(vec![0.0]), 0.0), (fv(vec![1.0]), 101.0)];
        assert!(fit_forest(&bad, &ForestParams::default()).is_err());
        let mixed = vec![(fv(vec![0.0]), 0.0), (fv(vec![1.0, 2.0]), 1.0)];
        assert!(fit_forest(&mixed, &ForestParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn aggregation_symmetric_and_monotone(
            v in prop::array::uniform4(0.0f64..=100.0),
            bump in 0.0f64..=50.0,
            idx in 0usize..4,
        ) {
            let base = aggregate_news_values(&ratings(v[0], v[1], v[2], v[3])).unwrap();
            let rotated = aggregate_news_values(&ratings(v[3], v[0], v[1], v[2])).unwrap();
            let swapped = aggregate_news_values(&ratings(v[1], v[0], v[3], v[2])).unwrap();
            prop_assert!((base - rotated).abs() <= 1e-12);
            prop_assert!((base - swapped).abs() <= 1e-12);
            let mut w = v;
            w[idx] = (w[idx] + bump).min(100.0);
            let up = aggregate_news_values(&ratings(w[0], w[1], w[2], w[3])).unwrap();
            prop_assert!(up >= base - 1e-12);
        }

        #[test]
        fn prediction_within_leaf_range(
            xs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..100.0), 4..40),
            probe in prop::array::uniform2(-5.0f64..15.0),
            seed in any::<u64>(),
        ) {
            let data: Vec<_> = xs.iter().map(|&(a, b, y)| (fv(vec![a, b]), y)).collect();
            let params = ForestParams { n_trees: 5, max_depth: 4, min_leaf: 1, bootstrap_seed: seed, features_per_split: 1, bootstrap: true };
            let m = fit_forest(&data, &params).unwrap();
            let (lo, hi) = m.leaf_range();
            let p = predict(&m, &fv(probe.to_vec())).unwrap();
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }
}
