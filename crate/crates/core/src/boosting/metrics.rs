//! Binary-classification metrics used in training traces and evaluation
//! reports.

use crate::error::{Error, Result};

fn check_lengths(labels: &[u8], probs: &[f64]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::validation("metrics need at least one instance"));
    }
    if labels.len() != probs.len() {
        return Err(Error::validation(format!(
            "{} labels but {} predictions",
            labels.len(),
            probs.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("labels must be 0 or 1"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err(Error::validation("predictions must lie in [0, 1]"));
    }
    Ok(())
}

/// Mean negative log-likelihood. Probabilities are clamped away from 0/1
/// so saturated predictions yield a large finite loss instead of infinity.
pub fn log_loss(labels: &[u8], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let eps = 1e-15;
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Fraction correct at the 0.5 probability cutoff.
pub fn accuracy(labels: &[u8], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let correct = labels
        .iter()
        .zip(probs)
        .filter(|(&y, &p)| (p >= 0.5) == (y == 1))
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// F1 at the 0.5 cutoff. When nothing is predicted positive (or nothing
/// is truly positive) the score is 0 by convention.
pub fn f1(labels: &[u8], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&y, &p) in labels.iter().zip(probs) {
        let pos = p >= 0.5;
        match (y == 1, pos) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Area under the ROC curve via the rank statistic, with tied scores
/// assigned average ranks. Needs both classes present.
pub fn auc(labels: &[u8], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::domain(
            "AUC is undefined when only one class is present",
        ));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie group [i, j].
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_loss_known_values() {
        // Perfectly confident and correct: loss near 0.
        let l = log_loss(&[1, 0], &[1.0, 0.0]).unwrap();
        assert!(l < 1e-10);
        // Uninformative 0.5 predictions: ln 2.
        let l = log_loss(&[1, 0, 1], &[0.5, 0.5, 0.5]).unwrap();
        assert!((l - (2f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_and_f1() {
        let labels = [1, 1, 0, 0];
        let probs = [0.9, 0.4, 0.2, 0.6];
        assert_eq!(accuracy(&labels, &probs).unwrap(), 0.5);
        // tp=1, fp=1, fn=1 -> F1 = 2/4.
        assert_eq!(f1(&labels, &probs).unwrap(), 0.5);
        // No positive predictions.
        assert_eq!(f1(&[1, 0], &[0.1, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn auc_perfect_and_inverted() {
        let labels = [0, 0, 1, 1];
        assert_eq!(auc(&labels, &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&labels, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 0.0);
        assert_eq!(auc(&labels, &[0.5, 0.5, 0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn auc_with_ties_uses_average_ranks() {
        // One positive tied with one negative at 0.5, one clear positive.
        let labels = [1, 0, 1, 0];
        let probs = [0.5, 0.5, 0.9, 0.1];
        // Pairs: (p=0.9 beats both negatives) = 2, (p=0.5 vs 0.5) = 0.5,
        // (p=0.5 vs 0.1) = 1 -> 3.5 / 4.
        assert!((auc(&labels, &probs).unwrap() - 0.875).abs() < 1e-12);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(matches!(
            auc(&[1, 1], &[0.5, 0.6]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn input_validation() {
        assert!(log_loss(&[], &[]).is_err());
        assert!(log_loss(&[1], &[0.5, 0.6]).is_err());
        assert!(log_loss(&[2], &[0.5]).is_err());
        assert!(accuracy(&[1], &[1.5]).is_err());
        assert!(accuracy(&[1], &[f64::NAN]).is_err());
    }
}
