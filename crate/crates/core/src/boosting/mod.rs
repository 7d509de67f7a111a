//! Plaintext gradient-boosting core: second-order logistic gradients,
//! quantile binning, histogram aggregation, split scoring, and a
//! centralized trainer. The federated protocol reuses every piece of this
//! module — the same binning, the same split enumeration order, the same
//! stopping rules — so that a federated run over encrypted statistics
//! produces the tree the centralized trainer would have produced on the
//! joined data.

pub mod bins;
pub mod histogram;
pub mod metrics;
pub mod split;
pub mod tree;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bigmath::mix_seed;
use crate::error::{Error, Result};

/// Default binary scale of the fixed-point grid: split statistics (and
/// their homomorphic encodings) are quantized as round(x * 2^40).
pub const DEFAULT_SCALE_BITS: u32 = 40;

/// Training hyperparameters shared by the centralized and federated
/// trainers. All parties must agree on these; the session handshake
/// compares a checksum of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    /// Number of boosting rounds (trees).
    pub trees: usize,
    /// Maximum tree depth; the root is at depth 0.
    pub max_depth: usize,
    /// Shrinkage applied to every leaf weight at prediction time.
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain a split must exceed (subtracted inside the gain).
    pub gamma: f64,
    /// Fraction of training rows drawn (without replacement) per tree.
    pub subsample: f64,
    /// Number of quantile bins proposed per feature.
    pub bins: usize,
    /// Initial probability estimate; raw scores start at its logit.
    pub base_score: f64,
    /// Minimum number of instances on each side of an accepted split.
    pub min_child: usize,
    /// Binary scale of the fixed-point grid split statistics are scored
    /// on. Bucket gradient sums are accumulated as integers
    /// round(g * 2^scale_bits) — the same grid the encrypted aggregation
    /// uses on the wire — so every party, and the centralized reference
    /// trainer, scores every candidate split from bit-identical numbers.
    /// Leaf weights are not quantized.
    pub scale_bits: u32,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            trees: 25,
            max_depth: 3,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 0.8,
            bins: 32,
            base_score: 0.5,
            min_child: 1,
            scale_bits: DEFAULT_SCALE_BITS,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::config("tree count must be at least 1"));
        }
        if self.max_depth == 0 || self.max_depth > 32 {
            return Err(Error::config("max depth must be in 1..=32"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda must be nonnegative"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("gamma must be nonnegative"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config("subsample fraction must be in (0, 1]"));
        }
        if self.bins < 2 || self.bins > 65_535 {
            return Err(Error::config("bin count must be in 2..=65535"));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(Error::config("base score must be strictly inside (0, 1)"));
        }
        if self.min_child == 0 {
            return Err(Error::config("min child count must be at least 1"));
        }
        // Gradients have magnitude at most 1, so 52 bits already exhausts
        // the f64 mantissa; beyond that the grid only inflates the sums.
        if self.scale_bits == 0 || self.scale_bits > 52 {
            return Err(Error::config("scale_bits must be in 1..=52"));
        }
        Ok(())
    }
}

/// First and second derivative of the loss at one instance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradPair {
    pub g: f64,
    pub h: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability clamp applied before gradient computation so the hessian
/// p(1-p) never collapses to zero even when the raw score saturates the
/// sigmoid in f64.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamped_prob(raw: f64) -> f64 {
    sigmoid(raw).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Logit of the base score: the raw score every instance starts from.
pub fn base_raw(base_score: f64) -> f64 {
    (base_score / (1.0 - base_score)).ln()
}

/// Log-loss gradient pair at a predicted probability: g = p - y and
/// h = p(1-p). Requires y in {0, 1} and p strictly inside (0, 1).
pub fn logistic_grad(y: u8, p: f64) -> Result<GradPair> {
    if y > 1 {
        return Err(Error::domain(format!("label {y} is not binary")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "predicted probability {p} outside the open interval (0, 1)"
        )));
    }
    Ok(GradPair {
        g: p - f64::from(y),
        h: p * (1.0 - p),
    })
}

/// Optimal leaf weight -G / (H + lambda) for gradient sums G, H.
/// The denominator must be positive.
pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64) -> Result<f64> {
    let denom = h_sum + lambda;
    if !(denom > 0.0) {
        return Err(Error::domain(format!(
            "leaf weight denominator {denom} is not positive"
        )));
    }
    Ok(-g_sum / denom)
}

/// Per-tree RNG stream: independent of every other tree's stream and of
/// any other randomness derived from the same run seed.
pub fn tree_rng(seed: u64, tree_index: usize) -> ChaCha20Rng {
    use rand::SeedableRng;
    ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x7265_0000_0000_0000 | tree_index as u64))
}

/// Draws round(n * fraction) distinct row positions (at least one),
/// returned in ascending order. A fraction of 1 selects everything
/// without consuming randomness.
pub fn subsample_rows<R: Rng>(n: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let count = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut picked = pool[..count].to_vec();
    picked.sort_unstable();
    picked
}
