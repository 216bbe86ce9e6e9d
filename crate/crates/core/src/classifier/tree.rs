//! CART-style classification tree grown with Gini impurity.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{N_CLASSES, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training counts per class (index 0 non-minke, 1 minke).
    Leaf { counts: [u32; N_CLASSES] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub n_split_features: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Midpoint of two distinct adjacent values that still separates them.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn class_counts(idx: &[usize], y: &[u8]) -> [u32; N_CLASSES] {
    let mut c = [0u32; N_CLASSES];
    for &i in idx {
        c[y[i] as usize] += 1;
    }
    c
}

/// Sum of squared class counts over the node size; splitting maximizes the
/// size-weighted sum of this over both children, which is the same as
/// minimizing weighted Gini impurity.
fn purity(c: &[u32; N_CLASSES], n: u32) -> f64 {
    let sq: f64 = c.iter().map(|&v| (v as f64) * (v as f64)).sum();
    sq / n as f64
}

fn best_split(
    idx: &[usize],
    x: &[[f64; N_FEATURES]],
    y: &[u8],
    features: &[usize],
    min_leaf: usize,
) -> Option<Candidate> {
    let n = idx.len();
    let total = class_counts(idx, y);
    let mut best: Option<Candidate> = None;
    let mut order: Vec<(f64, u8)> = Vec::with_capacity(n);

    for &f in features {
        order.clear();
        order.extend(idx.iter().map(|&i| (x[i][f], y[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u32; N_CLASSES];
        for pos in 0..n - 1 {
            left[order[pos].1 as usize] += 1;
            let (v, next) = (order[pos].0, order[pos + 1].0);
            if v == next {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let mut right = total;
            for k in 0..N_CLASSES {
                right[k] -= left[k];
            }
            let score = purity(&left, n_left as u32) + purity(&right, n_right as u32);
            // Strictly better only: earlier features and lower thresholds win ties.
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    score,
                });
            }
        }
    }
    best
}

/// Draws up to `k` features in random order, skipping those that are
/// constant over the node, and returns them sorted.
fn draw_features<R: Rng>(x: &[[f64; N_FEATURES]], idx: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    for f in index::sample(rng, N_FEATURES, N_FEATURES) {
        if chosen.len() == k {
            break;
        }
        let first = x[idx[0]][f];
        if idx.iter().any(|&i| x[i][f] != first) {
            chosen.push(f);
        }
    }
    chosen.sort_unstable();
    chosen
}

pub(crate) fn grow<R: Rng>(
    x: &[[f64; N_FEATURES]],
    y: &[u8],
    sample: Vec<usize>,
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let mut nodes = Vec::new();
    grow_node(x, y, sample, 0, params, rng, &mut nodes);
    Tree { nodes }
}

fn grow_node<R: Rng>(
    x: &[[f64; N_FEATURES]],
    y: &[u8],
    idx: Vec<usize>,
    depth: usize,
    params: &GrowParams,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> usize {
    let counts = class_counts(&idx, y);
    let id = nodes.len();
    nodes.push(Node::Leaf { counts });

    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_reached || idx.len() < 2 * params.min_leaf {
        return id;
    }

    let features = draw_features(x, &idx, params.n_split_features, rng);
    let Some(split) = best_split(&idx, x, y, &features, params.min_leaf) else {
        return id;
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i][split.feature] <= split.threshold);
    let left = grow_node(x, y, left_idx, depth + 1, params, rng, nodes);
    let right = grow_node(x, y, right_idx, depth + 1, params, rng, nodes);
    nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64; N_FEATURES]) -> [u32; N_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return *counts,
            }
        }
    }

    /// Majority class at the reached leaf; ties go to class 0.
    pub fn vote(&self, x: &[f64; N_FEATURES]) -> u8 {
        let c = self.leaf_counts(x);
        u8::from(c[1] > c[0])
    }

    /// Structural checks used when loading a model file.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= N_FEATURES {
                        return Err(format!("node {i}: feature index {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: threshold not finite"));
                    }
                    // Children are stored after their parent, which rules out cycles.
                    if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index"));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(format!("node {i}: empty leaf"));
                    }
                }
            }
        }
        Ok(())
    }
}
