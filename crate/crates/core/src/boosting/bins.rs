//! Percentile-based candidate thresholds. Each feature gets at most `bins`
//! split candidates taken at evenly spaced quantile ranks of its observed
//! values; bucket v collects the instances with s_{v-1} < x <= s_v, so the
//! histogram over buckets is exactly the sufficient statistic for every
//! candidate split of that feature.

use crate::error::{Error, Result};

/// Candidate thresholds per feature, strictly increasing, with the last
/// threshold equal to the feature's maximum observed value (so every
/// observed value lands in some bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct BinThresholds {
    per_feature: Vec<Vec<f64>>,
}

impl BinThresholds {
    /// Proposes thresholds from the values of `columns` at `rows`.
    /// The j-th candidate (1-based) of a feature is the value at rank
    /// ceil(m * j / bins) of its sorted sample; duplicates collapse, so a
    /// feature may end up with fewer than `bins` distinct thresholds.
    pub fn propose(columns: &[Vec<f64>], rows: &[usize], bins: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("cannot propose bins from zero rows"));
        }
        if bins < 1 {
            return Err(Error::config("bin count must be at least 1"));
        }
        let m = rows.len();
        let mut per_feature = Vec::with_capacity(columns.len());
        for (k, column) in columns.iter().enumerate() {
            let mut sample = Vec::with_capacity(m);
            for &r in rows {
                let x = *column.get(r).ok_or_else(|| {
                    Error::invariant(format!("row {r} outside column {k} of length {}", column.len()))
                })?;
                if !x.is_finite() {
                    return Err(Error::validation(format!(
                        "feature {k} has a non-finite value at row {r}"
                    )));
                }
                sample.push(x);
            }
            sample.sort_by(f64::total_cmp);
            let mut thresholds = Vec::with_capacity(bins.min(m));
            for j in 1..=bins {
                let rank = (m * j).div_ceil(bins); // in 1..=m
                let value = sample[rank - 1];
                if thresholds.last() != Some(&value) {
                    thresholds.push(value);
                }
            }
            per_feature.push(thresholds);
        }
        Ok(BinThresholds { per_feature })
    }

    pub fn from_parts(per_feature: Vec<Vec<f64>>) -> Result<Self> {
        for (k, t) in per_feature.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::validation(format!("feature {k} has no thresholds")));
            }
            if !t.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::validation(format!(
                    "feature {k} thresholds are not strictly increasing"
                )));
            }
        }
        Ok(BinThresholds { per_feature })
    }

    pub fn feature_count(&self) -> usize {
        self.per_feature.len()
    }

    /// Number of distinct thresholds (buckets) for one feature.
    pub fn bucket_count(&self, feature: usize) -> usize {
        self.per_feature[feature].len()
    }

    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.per_feature[feature]
    }

    /// Sum of bucket counts across features: the width of one full
    /// histogram row over this party's features.
    pub fn total_buckets(&self) -> usize {
        self.per_feature.iter().map(Vec::len).sum()
    }

    /// The bucket of value `x` under feature `feature`: the first
    /// threshold at or above it. A value above the top threshold cannot
    /// come from the sample the bins were proposed on, so it is reported
    /// as a broken invariant.
    pub fn bucket_of(&self, feature: usize, x: f64) -> Result<usize> {
        if x.is_nan() {
            return Err(Error::validation(format!("feature {feature} value is NaN")));
        }
        let thresholds = &self.per_feature[feature];
        let v = thresholds.partition_point(|&s| s < x);
        if v == thresholds.len() {
            return Err(Error::invariant(format!(
                "value {x} of feature {feature} lies above the top threshold {}",
                thresholds.last().unwrap()
            )));
        }
        Ok(v)
    }
}
