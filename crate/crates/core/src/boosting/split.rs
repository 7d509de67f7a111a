//! Split scoring and the deterministic argmax over all candidate splits.
//!
//! Candidates are enumerated in a fixed canonical order — parties by
//! ascending ID, features by ascending local index, buckets by ascending
//! threshold — and ties are broken by keeping the first candidate seen.
//! Both trainers (centralized and federated) walk this exact order, which
//! is what makes their chosen splits comparable.

use super::histogram::Histogram;

/// Gain of splitting a node with totals (g_total, h_total) so that the
/// left child receives (g_left, h_left):
/// 1/2 * [ gl^2/(hl+lambda) + gr^2/(hr+lambda) - g^2/(h+lambda) ] - gamma.
pub fn split_gain(
    g_left: f64,
    h_left: f64,
    g_total: f64,
    h_total: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let g_right = g_total - g_left;
    let h_right = h_total - h_left;
    0.5 * (g_left * g_left / (h_left + lambda)
        + g_right * g_right / (h_right + lambda)
        - g_total * g_total / (h_total + lambda))
        - gamma
}

/// One party's decrypted (or locally plaintext) histograms for a node.
#[derive(Debug)]
pub struct HistogramBlock<'a> {
    pub party_id: u32,
    pub hist: &'a Histogram<f64>,
}

/// The winning candidate: which block (party), which of its features, and
/// which bucket boundary. `bucket` is the index of the last bucket that
/// goes left, i.e. the split predicate is x <= thresholds[feature][bucket].
#[derive(Debug, Clone, PartialEq)]
pub struct BestSplit {
    pub block_index: usize,
    pub party_id: u32,
    pub feature: usize,
    pub bucket: usize,
    pub gain: f64,
}

/// Scans every (party, feature, bucket) candidate by prefix-summing the
/// histograms and returns the first strict maximum of the gain. Returns
/// `None` only when there are no candidates at all (no features).
pub fn best_split(
    blocks: &[HistogramBlock<'_>],
    g_total: f64,
    h_total: f64,
    lambda: f64,
    gamma: f64,
) -> Option<BestSplit> {
    let mut best: Option<BestSplit> = None;
    for (block_index, block) in blocks.iter().enumerate() {
        for feature in 0..block.hist.feature_count() {
            let g_row = &block.hist.g[feature];
            let h_row = &block.hist.h[feature];
            let mut g_left = 0.0;
            let mut h_left = 0.0;
            for bucket in 0..g_row.len() {
                g_left += g_row[bucket];
                h_left += h_row[bucket];
                let gain = split_gain(g_left, h_left, g_total, h_total, lambda, gamma);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        block_index,
                        party_id: block.party_id,
                        feature,
                        bucket,
                        gain,
                    });
                }
            }
        }
    }
    best
}
