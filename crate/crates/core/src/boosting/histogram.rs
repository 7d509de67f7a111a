//! Gradient histogram accumulation, generic over the summand type. The
//! passive parties in the federated protocol run this exact code over
//! Paillier ciphertexts, and the centralized trainer (and the active
//! party's own feature block) runs it over plain f64 — one code path, so
//! the bucketing cannot diverge between the two worlds.

use super::bins::BinThresholds;
use super::GradPair;
use crate::bigmath::{dequantize, quantize};
use crate::error::{Error, Result};

/// Things a histogram can sum: plain reals or additively homomorphic
/// ciphertexts. `Ctx` carries whatever the addition needs (nothing for
/// f64, the public key for ciphertexts).
pub trait Summable: Clone {
    type Ctx;

    fn sum_zero(ctx: &Self::Ctx) -> Self;
    fn sum_add(&self, rhs: &Self, ctx: &Self::Ctx) -> Self;
}

impl Summable for f64 {
    type Ctx = ();

    fn sum_zero(_: &()) -> Self {
        0.0
    }

    fn sum_add(&self, rhs: &Self, _: &()) -> Self {
        self + rhs
    }
}

impl Summable for i128 {
    type Ctx = ();

    fn sum_zero(_: &()) -> Self {
        0
    }

    fn sum_add(&self, rhs: &Self, _: &()) -> Self {
        self + rhs
    }
}

/// Per-feature, per-bucket sums of first- and second-order gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    /// g[feature][bucket]
    pub g: Vec<Vec<T>>,
    /// h[feature][bucket]
    pub h: Vec<Vec<T>>,
}

impl<T> Histogram<T> {
    pub fn feature_count(&self) -> usize {
        self.g.len()
    }
}

/// Accumulates gradient sums per (feature, bucket) over `instances`.
///
/// `instances` are row indices into the columns, visited in the order
/// given (callers pass ascending order so that floating-point accumulation
/// is reproducible). `lookup` maps a row index to its (g, h) pair; empty
/// buckets keep the summation identity from `sum_zero`, so with
/// ciphertexts an untouched bucket is the trivial encryption of zero.
pub fn aggregate_histogram<T, F>(
    bins: &BinThresholds,
    columns: &[Vec<f64>],
    instances: &[usize],
    lookup: F,
    ctx: &T::Ctx,
) -> Result<Histogram<T>>
where
    T: Summable,
    F: Fn(usize) -> Result<(T, T)>,
{
    if bins.feature_count() != columns.len() {
        return Err(Error::invariant(format!(
            "{} thresholds for {} columns",
            bins.feature_count(),
            columns.len()
        )));
    }
    let d = columns.len();
    let mut g: Vec<Vec<T>> = (0..d)
        .map(|k| vec![T::sum_zero(ctx); bins.bucket_count(k)])
        .collect();
    let mut h = g.clone();
    for &row in instances {
        let (gi, hi) = lookup(row)?;
        for k in 0..d {
            let x = *columns[k].get(row).ok_or_else(|| {
                Error::invariant(format!("row {row} outside column {k}"))
            })?;
            let v = bins.bucket_of(k, x)?;
            g[k][v] = g[k][v].sum_add(&gi, ctx);
            h[k][v] = h[k][v].sum_add(&hi, ctx);
        }
    }
    Ok(Histogram { g, h })
}

/// Bucket gradient sums on the fixed-point grid, handed back as the f64
/// values the split scorer consumes. Quantizing each gradient and summing
/// as integers makes the result independent of addition order and bit-equal
/// to what decrypting a homomorphic sum of the same encodings yields — both
/// trainers score splits from these numbers, so their choices cannot drift
/// apart on representation noise.
pub fn quantized_histogram(
    bins: &BinThresholds,
    columns: &[Vec<f64>],
    instances: &[usize],
    grads: &[GradPair],
    scale_bits: u32,
) -> Result<Histogram<f64>> {
    let q: Histogram<i128> = aggregate_histogram(
        bins,
        columns,
        instances,
        |i| Ok((quantize(grads[i].g, scale_bits)?, quantize(grads[i].h, scale_bits)?)),
        &(),
    )?;
    let open = |sums: Vec<Vec<i128>>| -> Vec<Vec<f64>> {
        sums.into_iter()
            .map(|col| col.into_iter().map(|v| dequantize(v, scale_bits)).collect())
            .collect()
    };
    Ok(Histogram {
        g: open(q.g),
        h: open(q.h),
    })
}
