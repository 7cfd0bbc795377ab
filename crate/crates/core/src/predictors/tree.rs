//! Axis-aligned regression tree grown by variance reduction.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, N_FEATURES};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl RegressionTree {
    /// A tree that predicts `value` everywhere.
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, n: 1 }],
        }
    }

    /// Fit on the rows selected by `sample` (indices may repeat).
    pub fn fit(xs: &[FeatureVector], ys: &[f64], sample: Vec<usize>, params: TreeParams, rng: &mut Rng) -> Self {
        assert!(!sample.is_empty(), "tree needs at least one sample");
        let mut b = Builder {
            xs,
            ys,
            params,
            nodes: Vec::new(),
        };
        b.grow(sample, 0, rng);
        Self { nodes: b.nodes }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.0[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Builder<'_> {
    fn push_leaf(&mut self, idx: &[usize]) -> usize {
        let sum: f64 = idx.iter().map(|&i| self.ys[i]).sum();
        self.nodes.push(Node::Leaf {
            value: sum / idx.len() as f64,
            n: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || idx.len() < 2 * min_leaf {
            return self.push_leaf(&idx);
        }
        let Some(split) = self.best_split(&idx, rng) else {
            return self.push_leaf(&idx);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.xs[i].0[split.feature] <= split.threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, n: 0 });
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        me
    }

    /// Features are visited in random order; the first `max_features` are
    /// always scored, later ones only while no valid split has been found.
    fn best_split(&self, idx: &[usize], rng: &mut Rng) -> Option<BestSplit> {
        let mut order: [usize; N_FEATURES] = std::array::from_fn(|i| i);
        order.shuffle(rng);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.ys[i]).sum();
        let parent_score = total * total / n;

        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for (k, &feature) in order.iter().enumerate() {
            if k >= self.params.max_features.max(1) && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.xs[i].0[feature], self.ys[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for s in 0..sorted.len() - 1 {
                left_sum += sorted[s].1;
                let n_left = s + 1;
                let n_right = sorted.len() - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                if sorted[s].0 == sorted[s + 1].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                let gain = score - parent_score;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (sorted[s].0 + sorted[s + 1].0),
                        gain,
                    });
                }
            }
        }
        // Splits that do not reduce the squared error are not worth a node.
        let tolerance = 1e-12 * parent_score.abs().max(1.0);
        best.filter(|b| b.gain > tolerance)
    }
}
