use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::features::{FeatureDataset, WindowFeatures};
use crate::ingest::Behavior;

const N_CLASSES: usize = Behavior::COUNT;
/// Impurity differences below this are ties.
pub(crate) const IMPURITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    #[default]
    None,
    /// Scale each class by `n / (k * count_c)`.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 5,
            features_per_split: None,
            bootstrap: true,
            class_weight: ClassWeight::None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: [f64; N_CLASSES],
    },
}

impl TreeNode {
    pub fn leaf_for<'a>(&'a self, x: &[f64]) -> &'a [f64; N_CLASSES] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
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

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    pub(crate) fn leaves_valid(&self) -> bool {
        match self {
            TreeNode::Leaf { counts } => {
                counts.iter().all(|c| c.is_finite() && *c >= 0.0) && counts.iter().sum::<f64>() > 0.0
            }
            TreeNode::Split {
                threshold, left, right, ..
            } => threshold.is_finite() && left.leaves_valid() && right.leaves_valid(),
        }
    }
}

/// Gini impurity `1 - sum p_c^2` of (weighted) class counts.
pub fn gini(counts: &[f64; N_CLASSES]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub behavior: Behavior,
    pub probabilities: [f64; N_CLASSES],
}

impl Prediction {
    /// Argmax; exact ties resolve to the earlier class in
    /// Feeding < Ruminating < Lying < Others.
    pub fn from_probabilities(probabilities: [f64; N_CLASSES]) -> Self {
        let mut best = 0;
        for (k, &p) in probabilities.iter().enumerate().skip(1) {
            if p > probabilities[best] {
                best = k;
            }
        }
        Self {
            behavior: Behavior::ALL[best],
            probabilities,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<TreeNode>,
    pub hyperparams: ForestParams,
    pub schema: Vec<String>,
    pub classes: Vec<Behavior>,
    /// Total weighted impurity decrease per feature, summed over trees.
    pub importances: Vec<f64>,
}

impl RandomForestModel {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn check_schema(&self, schema: &[String]) -> Result<(), ForestError> {
        if schema == self.schema.as_slice() {
            Ok(())
        } else {
            Err(ForestError::SchemaMismatch {
                expected: self.schema.len(),
                found: schema.len(),
            })
        }
    }

    /// Mean of per-tree leaf class frequencies.
    pub fn predict_values(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.schema.len() {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema.len(),
                found: x.len(),
            });
        }
        let mut probs = [0.0; N_CLASSES];
        for tree in &self.trees {
            let counts = tree.leaf_for(x);
            let total: f64 = counts.iter().sum();
            for (p, c) in probs.iter_mut().zip(counts) {
                *p += c / total;
            }
        }
        let n = self.trees.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Ok(Prediction::from_probabilities(probs))
    }

    pub fn predict_dataset(&self, dataset: &FeatureDataset) -> Result<Vec<Prediction>, ForestError> {
        self.check_schema(&dataset.schema)?;
        dataset
            .rows
            .par_iter()
            .map(|r| self.predict_values(&r.values))
            .collect()
    }
}

pub fn predict(model: &RandomForestModel, features: &WindowFeatures) -> Result<Prediction, ForestError> {
    model.check_schema(&features.schema)?;
    model.predict_values(&features.values)
}

/// Column-major view of a dataset for split search.
pub(crate) struct TrainingData {
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub class_weights: [f64; N_CLASSES],
}

impl TrainingData {
    pub fn new(dataset: &FeatureDataset, class_weight: ClassWeight) -> Self {
        let d = dataset.n_features();
        let columns = (0..d)
            .map(|f| dataset.rows.iter().map(|r| r.values[f]).collect())
            .collect();
        let labels: Vec<u8> = dataset.rows.iter().map(|r| r.label.index() as u8).collect();
        let mut class_weights = [1.0; N_CLASSES];
        if class_weight == ClassWeight::Balanced {
            let mut counts = [0usize; N_CLASSES];
            labels.iter().for_each(|&l| counts[l as usize] += 1);
            let n = labels.len() as f64;
            let present = counts.iter().filter(|&&c| c > 0).count() as f64;
            for (w, &c) in class_weights.iter_mut().zip(&counts) {
                *w = if c > 0 { n / (present * c as f64) } else { 0.0 };
            }
        }
        Self {
            columns,
            labels,
            class_weights,
        }
    }

    fn counts(&self, idx: &[u32]) -> [f64; N_CLASSES] {
        let mut c = [0.0; N_CLASSES];
        for &i in idx {
            let l = self.labels[i as usize] as usize;
            c[l] += self.class_weights[l];
        }
        c
    }
}

struct TreeBuilder<'a> {
    data: &'a TrainingData,
    params: &'a ForestParams,
    n_candidates: usize,
    rng: ChaCha8Rng,
    importances: Vec<f64>,
    scratch: Vec<(f64, u8)>,
}

#[derive(Clone, Copy)]
struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
    left: [f64; N_CLASSES],
    right: [f64; N_CLASSES],
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: &mut [u32], depth: usize) -> TreeNode {
        let counts = self.data.counts(idx);
        let parent = gini(&counts);
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || idx.len() < 2 * min_leaf || parent <= IMPURITY_EPS {
            return TreeNode::Leaf { counts };
        }

        let d = self.data.columns.len();
        let mut candidates = index::sample(&mut self.rng, d, self.n_candidates).into_vec();
        candidates.sort_unstable();

        let total_w: f64 = counts.iter().sum();
        let mut best: Option<BestSplit> = None;
        for &f in &candidates {
            let col = &self.data.columns[f];
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (col[i as usize], self.data.labels[i as usize])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let n = self.scratch.len();
            let mut left = [0.0; N_CLASSES];
            for i in 0..n - 1 {
                let (v, l) = self.scratch[i];
                left[l as usize] += self.data.class_weights[l as usize];
                let next = self.scratch[i + 1].0;
                if v == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let right: [f64; N_CLASSES] = std::array::from_fn(|k| counts[k] - left[k]);
                let wl: f64 = left.iter().sum();
                let wr: f64 = right.iter().sum();
                let impurity = (wl * gini(&left) + wr * gini(&right)) / total_w;
                if best.is_none_or(|b| impurity < b.impurity - IMPURITY_EPS) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(v, next),
                        impurity,
                        left,
                        right,
                    });
                }
            }
        }

        let Some(split) = best.filter(|b| parent - b.impurity > IMPURITY_EPS) else {
            return TreeNode::Leaf { counts };
        };
        self.importances[split.feature] += total_w * parent
            - split.left.iter().sum::<f64>() * gini(&split.left)
            - split.right.iter().sum::<f64>() * gini(&split.right);

        let col = &self.data.columns[split.feature];
        let mid = partition(idx, |i| col[i as usize] <= split.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = Box::new(self.build(l, depth + 1));
        let right = Box::new(self.build(r, depth + 1));
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        }
    }
}

/// Midpoint of two consecutive distinct values, never rounding onto `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let (yes, no): (Vec<u32>, Vec<u32>) = idx.iter().partition(|&&i| pred(i));
    let mid = yes.len();
    idx[..mid].copy_from_slice(&yes);
    idx[mid..].copy_from_slice(&no);
    mid
}

/// Trains a forest. Tree `t` draws from ChaCha stream `t` of `params.seed`, so
/// the result does not depend on thread scheduling.
pub fn train_forest(dataset: &FeatureDataset, params: &ForestParams) -> Result<RandomForestModel, ForestError> {
    if dataset.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    let data = TrainingData::new(dataset, params.class_weight);
    let d = dataset.n_features();
    let n = dataset.len();
    let n_candidates = params.resolved_features_per_split(d);

    let grown: Vec<(TreeNode, Vec<f64>)> = (0..params.n_trees.max(1))
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut idx: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut builder = TreeBuilder {
                data: &data,
                params,
                n_candidates,
                rng,
                importances: vec![0.0; d],
                scratch: Vec::with_capacity(n),
            };
            let root = builder.build(&mut idx, 0);
            (root, builder.importances)
        })
        .collect();

    let mut importances = vec![0.0; d];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        importances.iter_mut().zip(&imp).for_each(|(a, b)| *a += b);
        trees.push(tree);
    }
    Ok(RandomForestModel {
        trees,
        hyperparams: *params,
        schema: dataset.schema.clone(),
        classes: Behavior::ALL.to_vec(),
        importances,
    })
}

/// Features ranked by normalised importance, descending. Empty when no tree
/// ever split.
pub fn feature_importance(model: &RandomForestModel) -> Vec<(String, f64)> {
    let total: f64 = model.importances.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut ranked: Vec<(String, f64)> = model
        .schema
        .iter()
        .cloned()
        .zip(model.importances.iter().map(|v| v / total))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}
