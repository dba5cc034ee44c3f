//! Reference implementations used as test oracles.

#![allow(dead_code)]

use herdpipe::classify::TreeNode;
use herdpipe::features::{FeatureDataset, FeatureRow, ParamMode};
use herdpipe::ingest::Behavior;
use num_complex::Complex64;
use rand::Rng;

/// Textbook DFT in plain `f64` pairs.
pub fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            Complex64::new(re, im)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf([f64; 4]),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

fn counts(rows: &[(Vec<f64>, usize)]) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (_, l) in rows {
        c[*l] += 1.0;
    }
    c
}

fn impurity(c: &[f64; 4]) -> f64 {
    let t: f64 = c.iter().sum();
    if t <= 0.0 {
        return 0.0;
    }
    1.0 - c.iter().map(|v| (v / t) * (v / t)).sum::<f64>()
}

fn half_way(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Exhaustive CART: every feature, every cut between distinct values, first
/// strictly best split in (feature, threshold) order.
pub fn cart_oracle(rows: &[(Vec<f64>, usize)], depth: usize, max_depth: usize, min_leaf: usize) -> OracleTree {
    const EPS: f64 = 1e-12;
    let parent_counts = counts(rows);
    let parent = impurity(&parent_counts);
    if depth >= max_depth || rows.len() < 2 * min_leaf || parent <= EPS {
        return OracleTree::Leaf(parent_counts);
    }
    let n = rows.len() as f64;
    let d = rows[0].0.len();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let thr = half_way(pair[0], pair[1]);
            let (left, right): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.0[f] <= thr);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let (cl, cr) = (counts(&left), counts(&right));
            let score = (left.len() as f64 * impurity(&cl) + right.len() as f64 * impurity(&cr)) / n;
            if best.is_none_or(|b| score < b.2 - EPS) {
                best = Some((f, thr, score));
            }
        }
    }
    match best {
        Some((f, thr, score)) if parent - score > EPS => {
            let (left, right): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.0[f] <= thr);
            OracleTree::Split {
                feature: f,
                threshold: thr,
                left: Box::new(cart_oracle(&left, depth + 1, max_depth, min_leaf)),
                right: Box::new(cart_oracle(&right, depth + 1, max_depth, min_leaf)),
            }
        }
        _ => OracleTree::Leaf(parent_counts),
    }
}

pub fn same_tree(a: &TreeNode, b: &OracleTree) -> bool {
    match (a, b) {
        (TreeNode::Leaf { counts }, OracleTree::Leaf(c)) => counts == c,
        (
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            },
            OracleTree::Split {
                feature: f,
                threshold: t,
                left: l,
                right: r,
            },
        ) => feature == f && threshold == t && same_tree(left, l) && same_tree(right, r),
        _ => false,
    }
}

/// Random dataset of `n x d`; half the time values come from a small integer
/// grid so that ties are common.
pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<(Vec<f64>, usize)> {
    let gridded = rng.gen_bool(0.5);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    if gridded {
                        rng.gen_range(0..6) as f64
                    } else {
                        rng.gen_range(-10.0..10.0)
                    }
                })
                .collect();
            // label correlated with the first feature, plus noise
            let l = if rng.gen_bool(0.7) {
                ((x[0] + 10.0) as usize) % 4
            } else {
                rng.gen_range(0..4)
            };
            (x, l)
        })
        .collect()
}

pub fn to_dataset(rows: &[(Vec<f64>, usize)]) -> FeatureDataset {
    let d = rows[0].0.len();
    FeatureDataset {
        schema: (0..d).map(|i| format!("f{i}")).collect(),
        mode: ParamMode::Raw6,
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, (x, l))| FeatureRow {
                start: i,
                values: x.clone(),
                label: Behavior::ALL[*l],
            })
            .collect(),
    }
}
