//! Leakage analysis for trained models.
//!
//! Internal tree nodes hide their thresholds behind party-private
//! records, but any party that owns a node close above two leaves learns
//! those leaves' instance spaces. How much that reveals is measured by
//! *leaf purity*: the fraction of a leaf's instances belonging to its
//! majority class. This module computes per-tree purity reports, the
//! weight-inversion attack a party could run on first-tree leaf weights
//! (ignoring the L2 penalty, a leaf weight is an invertible function of
//! its positive fraction), and the residual-separation quantities that
//! say how well a locally grown first tree masks the labels from every
//! later tree's gradients.

use serde::{Deserialize, Serialize};

use crate::boosting::{base_raw, sigmoid};
use crate::error::{Error, Result};
use crate::federation::model::{FedModel, FedNode, FedTree};

/// The first-tree leaf weight a positive fraction `theta` produces when
/// the L2 penalty is negligible and every row starts at probability `a`:
/// `w = (a - theta) / (a(a-1))`.
pub fn inversion_weight(theta: f64, a: f64) -> f64 {
    (a - theta) / (a * (a - 1.0))
}

/// Inverts [`inversion_weight`]: the positive fraction a first-tree leaf
/// weight reveals, `theta = a + w * a(1-a)`. Exact when the L2 penalty
/// is zero; biased toward `a` by a factor of roughly `h/(h+lambda)`
/// otherwise, so the estimate tightens as leaves grow.
pub fn theta_from_weight(w: f64, a: f64) -> f64 {
    a + w * a * (1.0 - a)
}

/// The positive fraction at which a leaf's post-update prediction lands
/// back on the baseline `a`, so the leaf looks untrained to anyone
/// watching the next round's gradients:
/// `theta* = a(1 + (1-a) ln(a/(1-a)))`. At the balanced initialization
/// `a = 0.5` this is 0.5, the composition with zero class signal; leaf
/// compositions far from it (high purity) separate the two classes'
/// residual magnitudes and thereby mask which row is which.
pub fn theta_star(a: f64) -> f64 {
    a * (1.0 + (1.0 - a) * (a / (1.0 - a)).ln())
}

/// Per-leaf residual class signal `|S(w(theta)) - theta|`: the gap
/// between the probability every row in the leaf is moved to and the
/// leaf's actual positive fraction. A count-weighted sum of this over a
/// tree's leaves is the separation between the classes' mean residual
/// magnitudes. Vanishes where `S(w(theta)) = theta` — at the balanced
/// initialization `a = 0.5` that point is exactly [`theta_star`].
pub fn residual_signal(theta: f64, a: f64) -> f64 {
    (sigmoid(inversion_weight(theta, a)) - theta).abs()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafStat {
    pub node: u32,
    pub count: usize,
    pub positives: usize,
    /// Positive fraction among the rows considered.
    pub theta: f64,
    /// max(theta, 1 - theta).
    pub purity: f64,
    pub weight: f64,
    /// What the weight-inversion attack estimates for theta.
    pub theta_from_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreePurityReport {
    pub tree: usize,
    pub rows_covered: usize,
    /// Mean purity over leaves, weighted by instance count.
    pub mean_purity: f64,
    pub leaves: Vec<LeafStat>,
}

fn leaf_weight_of(tree: &FedTree, node: u32) -> Result<f64> {
    match tree
        .nodes
        .get(node as usize)
        .ok_or_else(|| Error::invariant(format!("assignment to nonexistent node {node}")))?
    {
        FedNode::Leaf { weight } => Ok(*weight),
        FedNode::Split { .. } => Err(Error::invariant(format!(
            "assignment points at split node {node}"
        ))),
    }
}

fn validate_analysis_inputs(
    model: &FedModel,
    assignments: &[Vec<u32>],
    labels: &[u8],
    rows: &[usize],
) -> Result<()> {
    if assignments.len() != model.trees.len() {
        return Err(Error::validation(format!(
            "{} assignment vectors for {} trees",
            assignments.len(),
            model.trees.len()
        )));
    }
    for (t, a) in assignments.iter().enumerate() {
        if a.len() != labels.len() {
            return Err(Error::validation(format!(
                "tree {t} assigns {} rows, there are {} labels",
                a.len(),
                labels.len()
            )));
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("labels must be 0 or 1"));
    }
    if rows.iter().any(|&r| r >= labels.len()) {
        return Err(Error::validation("row index out of range"));
    }
    Ok(())
}

/// Computes, for every tree, what its leaves reveal about the labels of
/// `rows`: per-leaf positive fractions, purities, and the inversion
/// estimates an attacker gets from the weights alone.
pub fn leaf_purity_reports(
    model: &FedModel,
    assignments: &[Vec<u32>],
    labels: &[u8],
    rows: &[usize],
) -> Result<Vec<TreePurityReport>> {
    validate_analysis_inputs(model, assignments, labels, rows)?;
    if rows.is_empty() {
        return Err(Error::validation("no rows to analyze"));
    }
    let a = model.base_score;
    let mut reports = Vec::with_capacity(model.trees.len());
    for (t, tree) in model.trees.iter().enumerate() {
        let mut count = vec![0usize; tree.nodes.len()];
        let mut positives = vec![0usize; tree.nodes.len()];
        for &r in rows {
            let node = assignments[t][r] as usize;
            if node >= tree.nodes.len() {
                return Err(Error::invariant(format!(
                    "tree {t} assigns row {r} to nonexistent node {node}"
                )));
            }
            count[node] += 1;
            positives[node] += usize::from(labels[r]);
        }
        let mut leaves = Vec::new();
        let mut purity_sum = 0.0;
        for node in 0..tree.nodes.len() {
            if count[node] == 0 {
                continue;
            }
            let weight = leaf_weight_of(tree, node as u32)?;
            let theta = positives[node] as f64 / count[node] as f64;
            let purity = theta.max(1.0 - theta);
            purity_sum += count[node] as f64 * purity;
            leaves.push(LeafStat {
                node: node as u32,
                count: count[node],
                positives: positives[node],
                theta,
                purity,
                weight,
                theta_from_weight: theta_from_weight(weight, a),
            });
        }
        reports.push(TreePurityReport {
            tree: t,
            rows_covered: rows.len(),
            mean_purity: purity_sum / rows.len() as f64,
            leaves,
        });
    }
    Ok(reports)
}

pub fn purity_trend(reports: &[TreePurityReport]) -> Vec<f64> {
    reports.iter().map(|r| r.mean_purity).collect()
}

/// How well the first tree's residuals mask the labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualMaskReport {
    /// The shared starting probability `a`.
    pub base: f64,
    /// Positive fraction at which residuals carry no signal.
    pub theta_star: f64,
    /// Mean residual magnitude over positive rows, from the labels.
    pub mu_p: f64,
    /// Mean residual magnitude over negative rows, from the labels.
    pub mu_n: f64,
    /// Count-weighted mean of the per-leaf signal `|y_hat_j - theta_j|`
    /// using the true positive fractions.
    pub separation: f64,
    /// The same aggregate an attacker computes without labels, with
    /// theta estimated by weight inversion.
    pub separation_estimate: f64,
}

/// Analyzes the first tree: each leaf's post-update prediction versus
/// its actual class composition. High first-tree purity pushes every
/// leaf's composition away from [`theta_star`], which separates the
/// residual magnitudes of the two classes and so *reduces* what later
/// trees' gradients reveal.
pub fn residual_mask_report(
    model: &FedModel,
    assignments: &[Vec<u32>],
    labels: &[u8],
    rows: &[usize],
) -> Result<ResidualMaskReport> {
    validate_analysis_inputs(model, assignments, labels, rows)?;
    let tree = model
        .trees
        .first()
        .ok_or_else(|| Error::validation("model has no trees"))?;
    let a = model.base_score;
    let base = base_raw(a);

    let mut count = vec![0usize; tree.nodes.len()];
    let mut positives = vec![0usize; tree.nodes.len()];
    for &r in rows {
        let node = assignments[0][r] as usize;
        count[node] += 1;
        positives[node] += usize::from(labels[r]);
    }
    let n_pos: usize = positives.iter().sum();
    let n_neg: usize = rows.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::domain(
            "residual analysis needs both classes present",
        ));
    }

    let mut mu_p = 0.0;
    let mut mu_n = 0.0;
    let mut separation = 0.0;
    let mut separation_estimate = 0.0;
    for node in 0..tree.nodes.len() {
        if count[node] == 0 {
            continue;
        }
        let w = leaf_weight_of(tree, node as u32)?;
        // The prediction every row in this leaf carries after the first
        // tree; its distance to 0 or 1 is the row's residual magnitude.
        let y_hat = sigmoid(base + model.learning_rate * w);
        let n_j = count[node] as f64;
        let theta_j = positives[node] as f64 / n_j;
        mu_p += positives[node] as f64 * (1.0 - y_hat);
        mu_n += (count[node] - positives[node]) as f64 * y_hat;
        separation += n_j * (y_hat - theta_j).abs();
        separation_estimate += n_j * (y_hat - theta_from_weight(w, a)).abs();
    }
    Ok(ResidualMaskReport {
        base: a,
        theta_star: theta_star(a),
        mu_p: mu_p / n_pos as f64,
        mu_n: mu_n / n_neg as f64,
        separation: separation / rows.len() as f64,
        separation_estimate: separation_estimate / rows.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::model::{FedTree, MODEL_FORMAT_VERSION};
    use crate::federation::TrainingMode;

    /// One tree, one split, two leaves (nodes 1 and 2).
    fn model_with_leaf_weights(weights: &[(f64, f64)]) -> FedModel {
        let trees = weights
            .iter()
            .map(|&(wl, wr)| FedTree {
                nodes: vec![
                    FedNode::Split {
                        party: 1,
                        record: 0,
                        left: 1,
                        right: 2,
                    },
                    FedNode::Leaf { weight: wl },
                    FedNode::Leaf { weight: wr },
                ],
            })
            .collect();
        FedModel {
            format_version: MODEL_FORMAT_VERSION,
            mode: TrainingMode::Standard,
            learning_rate: 1.0,
            base_score: 0.5,
            parties: vec![1],
            trees,
        }
    }

    #[test]
    fn purity_report_hand_computed() {
        let model = model_with_leaf_weights(&[(0.0, 0.0)]);
        // Leaf 1: rows 0,1,2 with labels 1,1,0. Leaf 2: rows 3,4 labels 0,0.
        let assignments = vec![vec![1, 1, 1, 2, 2]];
        let labels = vec![1, 1, 0, 0, 0];
        let rows: Vec<usize> = (0..5).collect();
        let reports = leaf_purity_reports(&model, &assignments, &labels, &rows).unwrap();
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!(r.leaves.len(), 2);
        let leaf1 = &r.leaves[0];
        assert_eq!((leaf1.count, leaf1.positives), (3, 2));
        assert!((leaf1.theta - 2.0 / 3.0).abs() < 1e-15);
        assert!((leaf1.purity - 2.0 / 3.0).abs() < 1e-15);
        let leaf2 = &r.leaves[1];
        assert_eq!((leaf2.count, leaf2.positives), (2, 0));
        assert_eq!(leaf2.purity, 1.0);
        // Weighted mean: (3 * 2/3 + 2 * 1) / 5 = 0.8.
        assert!((r.mean_purity - 0.8).abs() < 1e-15);
    }

    #[test]
    fn purity_restricted_to_a_row_subset() {
        let model = model_with_leaf_weights(&[(0.0, 0.0)]);
        let assignments = vec![vec![1, 1, 1, 2, 2]];
        let labels = vec![1, 1, 0, 0, 0];
        // Only rows 0 and 3: each leaf sees one row, both pure.
        let reports = leaf_purity_reports(&model, &assignments, &labels, &[0, 3]).unwrap();
        assert_eq!(reports[0].mean_purity, 1.0);
        assert_eq!(reports[0].rows_covered, 2);
    }

    #[test]
    fn weight_inversion_roundtrip() {
        for &a in &[0.2, 0.5, 0.77] {
            for &theta in &[0.0, 0.1, 0.5, 0.93, 1.0] {
                let w = inversion_weight(theta, a);
                assert!(
                    (theta_from_weight(w, a) - theta).abs() < 1e-12,
                    "a={a}, theta={theta}"
                );
            }
        }
    }

    #[test]
    fn theta_star_satisfies_its_defining_equation() {
        // theta* is defined by: the leaf's post-update prediction equals
        // the baseline, S(w(theta*)) = a.
        for &a in &[0.07, 0.22, 0.5, 0.65, 0.9] {
            let ts = theta_star(a);
            let w = inversion_weight(ts, a);
            assert!(
                (sigmoid(w) - a).abs() < 1e-12,
                "a={a}: S(w(theta*)) = {}",
                sigmoid(w)
            );
        }
        assert!((theta_star(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residual_signal_vanishes_at_balanced_theta_star() {
        // With a = 0.5 the signal is zero exactly at theta* = 0.5 and
        // grows with the distance from it, i.e. with leaf purity.
        let a = 0.5;
        let ts = theta_star(a);
        assert!(residual_signal(ts, a) < 1e-12);
        let mut prev = 0.0;
        for step in 1..=10 {
            let d = step as f64 * 0.05;
            let up = residual_signal(ts + d, a);
            let down = residual_signal(ts - d, a);
            assert!((up - down).abs() < 1e-12, "symmetric around 0.5");
            assert!(up > prev, "d={d}: {up} vs {prev}");
            prev = up;
        }
    }

    #[test]
    fn residual_signal_at_theta_star_reflects_baseline_gap() {
        // For any initialization, theta* is where the post-update
        // prediction returns to the baseline, so the remaining signal
        // there is exactly |a - theta*|.
        for &a in &[0.1, 0.3, 0.5, 0.8] {
            let ts = theta_star(a);
            assert!(
                (residual_signal(ts, a) - (a - ts).abs()).abs() < 1e-12,
                "a={a}"
            );
        }
    }

    #[test]
    fn pure_leaves_separate_residuals_and_impure_ones_do_not() {
        // Pure first tree: leaf 1 all negative, leaf 2 all positive, with
        // the weights those compositions produce.
        let w_neg = inversion_weight(0.0, 0.5);
        let w_pos = inversion_weight(1.0, 0.5);
        let pure = model_with_leaf_weights(&[(w_neg, w_pos)]);
        let assignments = vec![vec![1, 1, 2, 2]];
        let labels = vec![0, 0, 1, 1];
        let rows: Vec<usize> = (0..4).collect();
        let pure_report = residual_mask_report(&pure, &assignments, &labels, &rows).unwrap();

        // Maximally impure first tree: both leaves half-and-half, weight 0.
        let impure = model_with_leaf_weights(&[(0.0, 0.0)]);
        let assignments = vec![vec![1, 2, 1, 2]];
        let impure_report = residual_mask_report(&impure, &assignments, &labels, &rows).unwrap();

        assert!(
            pure_report.separation > impure_report.separation + 0.05,
            "pure {} vs impure {}",
            pure_report.separation,
            impure_report.separation
        );
        // At a = 0.5 the impure tree sits exactly at theta*, no signal.
        assert!(impure_report.separation < 1e-12);
        // Pure leaves: every row's residual magnitude is the same small
        // value, and both class means see it.
        assert!((pure_report.mu_p - pure_report.mu_n).abs() < 1e-12);
        assert!(pure_report.mu_p < 0.2);
    }

    #[test]
    fn residual_report_requires_both_classes() {
        let model = model_with_leaf_weights(&[(0.0, 0.0)]);
        let assignments = vec![vec![1, 1, 2, 2]];
        let labels = vec![1, 1, 1, 1];
        let rows: Vec<usize> = (0..4).collect();
        assert!(matches!(
            residual_mask_report(&model, &assignments, &labels, &rows),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn validation_catches_shape_mismatches() {
        let model = model_with_leaf_weights(&[(0.0, 0.0)]);
        let labels = vec![1, 0];
        // Wrong number of assignment vectors.
        assert!(leaf_purity_reports(&model, &[], &labels, &[0]).is_err());
        // Assignment pointing at the split node.
        let assignments = vec![vec![0, 1]];
        assert!(leaf_purity_reports(&model, &assignments, &labels, &[0, 1]).is_err());
    }
}
