//! Regression fidelity metrics and nearest-rank quantile binning.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Agreement between predictions and targets over one sample group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Fidelity<T> {
    pub n: usize,
    /// `1 − SS_res/SS_tot` against the group's own target mean. `None` when
    /// the group has fewer than two samples or constant targets.
    pub r2: Option<T>,
    pub mae: T,
    pub rmse: T,
}

impl<T: Scalar> Fidelity<T> {
    pub fn compute(preds: &[T], targets: &[T]) -> Self {
        assert_eq!(preds.len(), targets.len(), "prediction/target length mismatch");
        let n = preds.len();
        if n == 0 {
            return Fidelity {
                n,
                r2: None,
                mae: T::zero(),
                rmse: T::zero(),
            };
        }
        let nf = T::count(n);
        let mut abs = T::zero();
        let mut sq = T::zero();
        for (&p, &y) in preds.iter().zip(targets) {
            let e = p - y;
            abs = abs + e.abs();
            sq = sq + e * e;
        }
        let mean_y = targets.iter().copied().sum::<T>() / nf;
        let ss_tot = targets
            .iter()
            .map(|&y| (y - mean_y) * (y - mean_y))
            .sum::<T>();
        let r2 = (n >= 2 && ss_tot > T::zero()).then(|| T::one() - sq / ss_tot);
        Fidelity {
            n,
            r2,
            mae: abs / nf,
            rmse: (sq / nf).sqrt(),
        }
    }
}

/// One quantile bin. `index` is the nominal bin position before duplicate
/// edges were merged, so a feature whose lowest quantiles coincide starts at
/// index 1 or later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QuantileBin<T> {
    pub index: usize,
    pub lo: T,
    pub hi: T,
}

/// Nearest-rank quantile: the `ceil(p·N)`-th smallest value (1-based).
fn nearest_rank<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Splits the range of `values` at nearest-rank quantiles into at most
/// `n_bins` bins. Bins are `(lo, hi]`, except the first, which also holds
/// `lo`. Bins whose edges coincide are merged into the following bin.
pub fn quantile_bins<T: Scalar>(values: &[T], n_bins: usize) -> Vec<QuantileBin<T>> {
    if values.is_empty() || n_bins == 0 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(sorted[0]);
    for i in 1..n_bins {
        edges.push(nearest_rank(&sorted, i as f64 / n_bins as f64));
    }
    edges.push(sorted[sorted.len() - 1]);

    let mut bins = Vec::new();
    let mut lo = edges[0];
    for i in 0..n_bins {
        let hi = edges[i + 1];
        if hi > lo || (i + 1 == n_bins && bins.is_empty()) {
            bins.push(QuantileBin { index: i, lo, hi });
            lo = hi;
        }
    }
    bins
}

/// Position in `bins` of the bin holding `v`. Values beyond either end go to
/// the nearest end bin.
pub fn assign_bin<T: Scalar>(bins: &[QuantileBin<T>], v: T) -> usize {
    bins.iter()
        .position(|b| v <= b.hi)
        .unwrap_or(bins.len().saturating_sub(1))
}
