use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::split::SplitFinder;
use crate::{Error, Result};

/// Node of a fitted tree, stored in a flat arena with the root at index 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        negatives: u32,
        positives: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Rebuilds a tree from its arena, checking that it is well formed.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("tree has no nodes"));
        }
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features
                        || !threshold.is_finite()
                        || left <= i
                        || right <= i
                        || left >= nodes.len()
                        || right >= nodes.len()
                        || left == right
                    {
                        return Err(Error::InvalidParams(alloc::format!("malformed split node {i}")));
                    }
                }
                Node::Leaf { negatives, positives } => {
                    if negatives as u64 + positives as u64 == 0 {
                        return Err(Error::InvalidParams(alloc::format!("empty leaf {i}")));
                    }
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Class counts of the leaf reached by `row`.
    pub fn leaf_counts(&self, row: &[f64]) -> (u32, u32) {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                Node::Leaf { negatives, positives } => return (negatives, positives),
            }
        }
    }

    /// Positive-class fraction of the leaf reached by `row`.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let (neg, pos) = self.leaf_counts(row);
        pos as f64 / (neg as f64 + pos as f64)
    }

    /// Like [`Tree::predict`] with `row[feature]` replaced by `value`.
    pub(crate) fn predict_with(&self, row: &[f64], feature: usize, value: f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => {
                    let v = if f == feature { value } else { row[f] };
                    i = if v <= threshold { left } else { right };
                }
                Node::Leaf { negatives, positives } => return positives as f64 / (negatives as f64 + positives as f64),
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for i in 0..self.nodes.len() {
            max = max.max(depth[i]);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
            }
        }
        max
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
}

/// Grows one tree on `sample` (row indices, repeats allowed). Adds each
/// split's `n_node * gain` to `impurity` at the split feature.
pub(crate) fn grow<R: Rng>(
    columns: &[Vec<f64>],
    y: &[bool],
    mut sample: Vec<usize>,
    params: &GrowParams,
    rng: &mut R,
    impurity: &mut [f64],
) -> Tree {
    let n_features = columns.len();
    let mut features: Vec<usize> = (0..n_features).collect();
    let mut candidates = Vec::with_capacity(params.mtry);
    let mut finder = SplitFinder::default();

    let placeholder = Node::Leaf {
        negatives: 0,
        positives: 0,
    };
    let mut nodes = vec![placeholder];
    let mut stack = vec![(0usize, 0usize, sample.len(), 0usize)];

    while let Some((id, lo, hi, depth)) = stack.pop() {
        let rows = &mut sample[lo..hi];
        let positives = rows.iter().filter(|&&i| y[i]).count() as u32;
        let negatives = rows.len() as u32 - positives;
        let leaf = Node::Leaf { negatives, positives };

        let splittable = positives > 0
            && negatives > 0
            && rows.len() >= 2 * params.min_node_size.max(1)
            && params.max_depth.is_none_or(|d| depth < d);
        if !splittable {
            nodes[id] = leaf;
            continue;
        }

        for i in 0..params.mtry {
            let j = rng.random_range(i..n_features);
            features.swap(i, j);
        }
        candidates.clear();
        candidates.extend_from_slice(&features[..params.mtry]);
        candidates.sort_unstable();

        let Some(split) = finder.find(columns, y, rows, &candidates, params.min_node_size) else {
            nodes[id] = leaf;
            continue;
        };

        let column = &columns[split.feature];
        let mut n_left = 0;
        for k in 0..rows.len() {
            if column[rows[k]] <= split.threshold {
                rows.swap(k, n_left);
                n_left += 1;
            }
        }
        impurity[split.feature] += rows.len() as f64 * split.gain;

        let left = nodes.len();
        nodes.push(placeholder);
        nodes.push(placeholder);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        stack.push((left + 1, lo + n_left, hi, depth + 1));
        stack.push((left, lo, lo + n_left, depth + 1));
    }

    Tree { nodes }
}
