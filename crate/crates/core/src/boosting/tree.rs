//! Centralized trainer: the reference implementation the federated
//! protocol is held to. Given the joined feature matrix it grows the same
//! breadth-first, histogram-based trees the protocol grows across parties,
//! with identical binning, split enumeration, stopping rules, and leaf
//! weights — so a federated model and a centralized model trained from the
//! same seed must match node for node. Split candidates are scored from
//! bucket sums quantized to the fixed-point grid of `scale_bits`, because
//! that is all a decrypted histogram can carry; scoring the same integers
//! here keeps every tie and every near-tie breaking identically.

use std::collections::VecDeque;

use super::bins::BinThresholds;
use super::histogram::quantized_histogram;
use super::split::{best_split, HistogramBlock};
use super::{
    base_raw, clamped_prob, leaf_weight, logistic_grad, metrics, subsample_rows, tree_rng,
    BoostParams, GradPair,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PlainNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// A tree stored as a flat vector, root at index 0, children appended in
/// breadth-first order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlainTree {
    pub nodes: Vec<PlainNode>,
}

impl PlainTree {
    /// Index of the leaf a row falls into. `fetch` maps a feature index to
    /// the row's value for it.
    pub fn leaf_index<F: Fn(usize) -> f64>(&self, fetch: &F) -> Result<usize> {
        let mut at = 0;
        for _ in 0..=self.nodes.len() {
            match &self.nodes[at] {
                PlainNode::Leaf { .. } => return Ok(at),
                PlainNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if fetch(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
        Err(Error::invariant("tree walk did not reach a leaf"))
    }

    pub fn weight_for<F: Fn(usize) -> f64>(&self, fetch: &F) -> Result<f64> {
        match &self.nodes[self.leaf_index(fetch)?] {
            PlainNode::Leaf { weight } => Ok(*weight),
            _ => Err(Error::invariant("leaf index pointed at a split node")),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, PlainNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainModel {
    pub trees: Vec<PlainTree>,
    pub learning_rate: f64,
    pub base_score: f64,
}

impl PlainModel {
    pub fn predict_raw<F: Fn(usize) -> f64>(&self, fetch: &F) -> Result<f64> {
        let mut raw = base_raw(self.base_score);
        for tree in &self.trees {
            raw += self.learning_rate * tree.weight_for(fetch)?;
        }
        Ok(raw)
    }

    pub fn predict_proba<F: Fn(usize) -> f64>(&self, fetch: &F) -> Result<f64> {
        Ok(super::sigmoid(self.predict_raw(fetch)?))
    }

    /// Predicted probabilities for every row of a column-major matrix.
    pub fn predict_matrix(&self, columns: &[Vec<f64>], rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&r| self.predict_proba(&|k: usize| columns[k][r]))
            .collect()
    }
}

/// Pre-split stopping rule shared by both trainers: a node at maximum
/// depth, or without even two instances, becomes a leaf before any
/// histogram work happens.
pub fn stop_before_split(depth: usize, n_rows: usize, params: &BoostParams) -> bool {
    depth >= params.max_depth || n_rows < 2
}

/// Post-split acceptance rule shared by both trainers: both children must
/// carry at least `min_child` instances, otherwise the node stays a leaf.
pub fn split_is_acceptable(left: usize, right: usize, min_child: usize) -> bool {
    left >= min_child && right >= min_child
}

/// Per-round loss trace. `test_loss` stays empty when no held-out rows are
/// supplied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
}

fn validate_training_inputs(
    columns: &[Vec<f64>],
    labels: &[u8],
    train_rows: &[usize],
    test_rows: &[usize],
) -> Result<usize> {
    let n = labels.len();
    for (k, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(Error::validation(format!(
                "column {k} has {} rows but there are {n} labels",
                c.len()
            )));
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("labels must be 0 or 1"));
    }
    if train_rows.is_empty() {
        return Err(Error::validation("no training rows"));
    }
    for set in [train_rows, test_rows] {
        if set.iter().any(|&r| r >= n) {
            return Err(Error::validation("row index out of range"));
        }
        if !set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::validation("row sets must be strictly ascending"));
        }
    }
    Ok(n)
}

/// Grows one tree on `root_rows` with gradients `grads` (indexed by row).
/// Shared semantics with the federated grower: breadth-first, leaf on
/// max depth / fewer than two rows / non-positive best gain / child below
/// `min_child`.
pub(crate) fn grow_plain_tree(
    columns: &[Vec<f64>],
    bins: &BinThresholds,
    grads: &[GradPair],
    root_rows: Vec<usize>,
    params: &BoostParams,
) -> Result<PlainTree> {
    struct Work {
        node: usize,
        rows: Vec<usize>,
        depth: usize,
    }
    let mut nodes = vec![PlainNode::Leaf { weight: 0.0 }];
    let mut queue = VecDeque::new();
    queue.push_back(Work {
        node: 0,
        rows: root_rows,
        depth: 0,
    });
    while let Some(work) = queue.pop_front() {
        let g_total: f64 = work.rows.iter().map(|&i| grads[i].g).sum();
        let h_total: f64 = work.rows.iter().map(|&i| grads[i].h).sum();
        let finish_leaf = |nodes: &mut Vec<PlainNode>| -> Result<()> {
            nodes[work.node] = PlainNode::Leaf {
                weight: leaf_weight(g_total, h_total, params.lambda)?,
            };
            Ok(())
        };
        if stop_before_split(work.depth, work.rows.len(), params) {
            finish_leaf(&mut nodes)?;
            continue;
        }
        let hist = quantized_histogram(bins, columns, &work.rows, grads, params.scale_bits)?;
        let blocks = [HistogramBlock {
            party_id: 0,
            hist: &hist,
        }];
        let best = match best_split(&blocks, g_total, h_total, params.lambda, params.gamma) {
            Some(b) if b.gain > 0.0 => b,
            _ => {
                finish_leaf(&mut nodes)?;
                continue;
            }
        };
        let threshold = bins.thresholds(best.feature)[best.bucket];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = work
            .rows
            .iter()
            .partition(|&&i| columns[best.feature][i] <= threshold);
        if !split_is_acceptable(left_rows.len(), right_rows.len(), params.min_child) {
            finish_leaf(&mut nodes)?;
            continue;
        }
        let left = nodes.len();
        nodes.push(PlainNode::Leaf { weight: 0.0 });
        let right = nodes.len();
        nodes.push(PlainNode::Leaf { weight: 0.0 });
        nodes[work.node] = PlainNode::Split {
            feature: best.feature,
            threshold,
            left,
            right,
        };
        queue.push_back(Work {
            node: left,
            rows: left_rows,
            depth: work.depth + 1,
        });
        queue.push_back(Work {
            node: right,
            rows: right_rows,
            depth: work.depth + 1,
        });
    }
    Ok(PlainTree { nodes })
}

/// Trains on the joined matrix. `train_rows`/`test_rows` index into the
/// columns; candidate thresholds are proposed once over all rows, each
/// round subsamples the training rows, and raw scores are maintained for
/// every row so the loss trace covers both sets.
pub fn train_centralized(
    columns: &[Vec<f64>],
    labels: &[u8],
    train_rows: &[usize],
    test_rows: &[usize],
    params: &BoostParams,
    seed: u64,
) -> Result<(PlainModel, TrainTrace)> {
    params.validate()?;
    let n = validate_training_inputs(columns, labels, train_rows, test_rows)?;
    let all_rows: Vec<usize> = (0..n).collect();
    let bins = BinThresholds::propose(columns, &all_rows, params.bins)?;
    let mut raw = vec![base_raw(params.base_score); n];
    let mut model = PlainModel {
        trees: Vec::with_capacity(params.trees),
        learning_rate: params.learning_rate,
        base_score: params.base_score,
    };
    let mut trace = TrainTrace::default();
    for t in 0..params.trees {
        let mut rng = tree_rng(seed, t);
        let picked = subsample_rows(train_rows.len(), params.subsample, &mut rng);
        let root_rows: Vec<usize> = picked.iter().map(|&p| train_rows[p]).collect();
        let mut grads = vec![GradPair::default(); n];
        for &i in &root_rows {
            grads[i] = logistic_grad(labels[i], clamped_prob(raw[i]))?;
        }
        let tree = grow_plain_tree(columns, &bins, &grads, root_rows, params)?;
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.weight_for(&|k: usize| columns[k][i])?;
        }
        model.trees.push(tree);
        trace
            .train_loss
            .push(loss_over(&raw, labels, train_rows)?);
        if !test_rows.is_empty() {
            trace.test_loss.push(loss_over(&raw, labels, test_rows)?);
        }
    }
    Ok((model, trace))
}

fn loss_over(raw: &[f64], labels: &[u8], rows: &[usize]) -> Result<f64> {
    let probs: Vec<f64> = rows.iter().map(|&i| super::sigmoid(raw[i])).collect();
    let ys: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
    metrics::log_loss(&ys, &probs)
}
