//! Interpretability statistics over a trained surrogate: partial dependence,
//! spline activation, saliency, edge importance, hidden-unit roles, the
//! combined influence score, binned fidelity, and monotonicity labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{Feature, FeatureVector, FEATURE_COUNT};
use crate::kan::KanModel;
use crate::metrics::{assign_bin, quantile_bins, Fidelity, QuantileBin};
use crate::scalar::{mean, Scalar};

/// Grid size used for partial dependence and monotonicity.
pub const DEFAULT_PDP_POINTS: usize = 64;
/// Nominal number of quantile bins per feature in the fidelity report.
pub const DEFAULT_FIDELITY_BINS: usize = 5;

fn require_data<T>(data: &[T]) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyDataset("interpretation needs at least one sample"))
    } else {
        Ok(())
    }
}

fn column_range<T: Scalar>(data: &[FeatureVector<T>], k: usize) -> (T, T) {
    data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), fv| {
        (lo.min(fv.0[k]), hi.max(fv.0[k]))
    })
}

/// Mean prediction as one feature sweeps a grid, others kept at their
/// observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PdpCurve<T> {
    pub feature_index: usize,
    /// Raw feature values, strictly increasing.
    pub grid: Vec<T>,
    pub values: Vec<T>,
    /// `values[last] − values[0]`.
    pub delta: T,
}

/// Partial dependence of the prediction on feature `k` over `points` evenly
/// spaced raw values spanning the data range. A constant feature yields a
/// single-point curve with zero delta.
pub fn partial_dependence<T: Scalar>(
    m: &KanModel<T>,
    data: &[FeatureVector<T>],
    k: usize,
    points: usize,
) -> Result<PdpCurve<T>> {
    require_data(data)?;
    if k >= FEATURE_COUNT {
        return Err(Error::InvalidConfig(format!("feature index {k} out of range")));
    }
    if points < 2 {
        return Err(Error::InvalidConfig("partial dependence needs at least 2 grid points".into()));
    }
    // The surrogate is additive, so overriding feature k shifts each sample's
    // prediction by contribution(new) − contribution(old).
    let mut rest = Vec::with_capacity(data.len());
    for fv in data {
        rest.push(m.predict(fv)? - m.feature_contribution(k, fv.0[k]));
    }
    let base = mean(&rest);
    let (lo, hi) = column_range(data, k);
    let grid: Vec<T> = if hi > lo {
        let span = hi - lo;
        let last = T::count(points - 1);
        (0..points)
            .map(|g| if g + 1 == points { hi } else { lo + span * T::count(g) / last })
            .collect()
    } else {
        vec![lo]
    };
    let values: Vec<T> = grid.iter().map(|&v| base + m.feature_contribution(k, v)).collect();
    let delta = if values.len() > 1 {
        values[values.len() - 1] - values[0]
    } else {
        T::zero()
    };
    Ok(PdpCurve {
        feature_index: k,
        grid,
        values,
        delta,
    })
}

/// Mean over samples and hidden units of `|s_{j,k}(x̃_k)|`, per feature.
pub fn spline_activation_stats<T: Scalar>(
    m: &KanModel<T>,
    data: &[FeatureVector<T>],
) -> Result<[T; FEATURE_COUNT]> {
    require_data(data)?;
    let mut acc = [T::zero(); FEATURE_COUNT];
    for fv in data {
        if !fv.is_finite() {
            return Err(Error::NonFinite(format!("feature vector {:?}", fv.0)));
        }
        for (k, a) in acc.iter_mut().enumerate() {
            for j in 0..m.hidden() {
                *a = *a + m.edge_value(j, k, fv.0[k]).abs();
            }
        }
    }
    let denom = T::count(data.len() * m.hidden());
    Ok(acc.map(|a| a / denom))
}

/// Mean `|∂ĉ/∂x_k|` in raw feature units, per feature.
pub fn saliency<T: Scalar>(
    m: &KanModel<T>,
    data: &[FeatureVector<T>],
) -> Result<[T; FEATURE_COUNT]> {
    require_data(data)?;
    let mut acc = [T::zero(); FEATURE_COUNT];
    for fv in data {
        let g = m.input_gradient(fv)?;
        for k in 0..FEATURE_COUNT {
            acc[k] = acc[k] + g[k].abs();
        }
    }
    let n = T::count(data.len());
    Ok(acc.map(|a| a / n))
}

/// `hidden × 7` matrix of edge coefficient norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EdgeImportanceMatrix<T> {
    pub rows: Vec<[T; FEATURE_COUNT]>,
}

impl<T: Scalar> EdgeImportanceMatrix<T> {
    /// Per-feature totals over hidden units.
    pub fn column_sums(&self) -> [T; FEATURE_COUNT] {
        let mut s = [T::zero(); FEATURE_COUNT];
        for row in &self.rows {
            for k in 0..FEATURE_COUNT {
                s[k] = s[k] + row[k];
            }
        }
        s
    }
}

/// L2 norm of every edge's coefficients. With `scale_by_weight`, each row is
/// additionally multiplied by `|w_j|`.
pub fn edge_importance<T: Scalar>(m: &KanModel<T>, scale_by_weight: bool) -> EdgeImportanceMatrix<T> {
    let rows = (0..m.hidden())
        .map(|j| {
            let w = if scale_by_weight { m.out_weights()[j].abs() } else { T::one() };
            std::array::from_fn(|k| {
                let c = m.edge_coeffs(j, k);
                w * c.iter().map(|&v| v * v).sum::<T>().sqrt()
            })
        })
        .collect();
    EdgeImportanceMatrix { rows }
}

/// Role summary of one hidden unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NodeStat<T> {
    /// Mean `|h_j|`.
    pub activation: T,
    /// `|w_j| · std(h_j)`.
    pub importance: T,
    pub top_feature: Feature,
    /// Signed Pearson correlation of `h_j` with `top_feature`.
    pub correlation: T,
    /// False when `h_j` is constant or has no varying feature to correlate
    /// with; `correlation` is then 0.
    pub correlation_defined: bool,
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let n = a.len();
    if n < 2 || n != b.len() {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

pub fn node_stats<T: Scalar>(m: &KanModel<T>, data: &[FeatureVector<T>]) -> Result<Vec<NodeStat<T>>> {
    require_data(data)?;
    let mut hidden: Vec<Vec<T>> = vec![Vec::with_capacity(data.len()); m.hidden()];
    for fv in data {
        let f = m.forward(fv)?;
        for (j, h) in f.hidden.into_iter().enumerate() {
            hidden[j].push(h);
        }
    }
    let columns: Vec<Vec<T>> = (0..FEATURE_COUNT)
        .map(|k| data.iter().map(|fv| fv.0[k]).collect())
        .collect();
    let n = T::count(data.len());
    Ok(hidden
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let activation = h.iter().map(|v| v.abs()).sum::<T>() / n;
            let mu = mean(h);
            let std = (h.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n).sqrt();
            let importance = m.out_weights()[j].abs() * std;
            let mut best: Option<(usize, T)> = None;
            if data.len() >= 3 {
                for (k, col) in columns.iter().enumerate() {
                    if let Some(r) = pearson(h, col) {
                        if best.is_none_or(|(_, b)| r.abs() > b.abs()) {
                            best = Some((k, r));
                        }
                    }
                }
            }
            let (k, r) = best.unwrap_or((0, T::zero()));
            NodeStat {
                activation,
                importance,
                top_feature: Feature::ALL[k],
                correlation: r,
                correlation_defined: best.is_some(),
            }
        })
        .collect())
}

/// Per-feature statistics of the trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureStats<T> {
    pub spline_activation: [T; FEATURE_COUNT],
    pub saliency: [T; FEATURE_COUNT],
    pub pdp_delta: [T; FEATURE_COUNT],
}

/// Builds [`FeatureStats`] from the model and the PDP curves (one per
/// feature, in feature order).
pub fn feature_stats<T: Scalar>(
    m: &KanModel<T>,
    data: &[FeatureVector<T>],
    pdps: &[PdpCurve<T>],
) -> Result<FeatureStats<T>> {
    if pdps.len() != FEATURE_COUNT {
        return Err(Error::InvalidConfig(format!(
            "expected {FEATURE_COUNT} PDP curves, got {}",
            pdps.len()
        )));
    }
    Ok(FeatureStats {
        spline_activation: spline_activation_stats(m, data)?,
        saliency: saliency(m, data)?,
        pdp_delta: std::array::from_fn(|k| pdps[k].delta),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InfluenceRow<T> {
    pub feature: Feature,
    pub spline_activation: T,
    pub saliency: T,
    pub pdp_delta: T,
    pub edge_importance: T,
    /// Mean of the four min-max normalized metrics, in `[0,1]`.
    pub influence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InfluenceTable<T> {
    pub rows: Vec<InfluenceRow<T>>,
}

/// Min-max normalization across features; a constant column maps to 0.5.
fn min_max<T: Scalar>(col: &[T; FEATURE_COUNT]) -> [T; FEATURE_COUNT] {
    let lo = col.iter().copied().fold(T::infinity(), T::min);
    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
    if hi > lo {
        col.map(|v| (v - lo) / (hi - lo))
    } else {
        [T::lit(0.5); FEATURE_COUNT]
    }
}

/// Combines four raw per-feature metric columns into the influence score.
/// The PDP delta enters signed.
pub fn influence_from_columns<T: Scalar>(
    spline_activation: [T; FEATURE_COUNT],
    saliency: [T; FEATURE_COUNT],
    pdp_delta: [T; FEATURE_COUNT],
    edge_importance: [T; FEATURE_COUNT],
) -> InfluenceTable<T> {
    let cols = [
        min_max(&spline_activation),
        min_max(&saliency),
        min_max(&pdp_delta),
        min_max(&edge_importance),
    ];
    let four = T::lit(4.0);
    let rows = Feature::ALL
        .iter()
        .map(|&f| {
            let k = f.index();
            InfluenceRow {
                feature: f,
                spline_activation: spline_activation[k],
                saliency: saliency[k],
                pdp_delta: pdp_delta[k],
                edge_importance: edge_importance[k],
                influence: cols.iter().map(|c| c[k]).sum::<T>() / four,
            }
        })
        .collect();
    InfluenceTable { rows }
}

pub fn influence_table<T: Scalar>(fs: &FeatureStats<T>, em: &EdgeImportanceMatrix<T>) -> InfluenceTable<T> {
    influence_from_columns(fs.spline_activation, fs.saliency, fs.pdp_delta, em.column_sums())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureBinFidelity<T> {
    pub feature: Feature,
    pub bin: QuantileBin<T>,
    pub fidelity: Fidelity<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FidelityReport<T> {
    pub overall: Fidelity<T>,
    pub bins: Vec<FeatureBinFidelity<T>>,
}

/// Overall fidelity plus fidelity inside per-feature quantile bins.
pub fn fidelity_bins<T: Scalar>(
    m: &KanModel<T>,
    data: &[FeatureVector<T>],
    targets: &[T],
    n_bins: usize,
) -> Result<FidelityReport<T>> {
    if data.len() != targets.len() {
        return Err(Error::InvalidConfig(format!(
            "{} samples but {} targets",
            data.len(),
            targets.len()
        )));
    }
    if n_bins == 0 || data.len() < n_bins {
        return Err(Error::InvalidConfig(format!(
            "need at least {n_bins} samples for {n_bins} bins, got {}",
            data.len()
        )));
    }
    let preds = data.iter().map(|fv| m.predict(fv)).collect::<Result<Vec<T>>>()?;
    let overall = Fidelity::compute(&preds, targets);
    let mut bins = Vec::new();
    for f in Feature::ALL {
        let col: Vec<T> = data.iter().map(|fv| fv.0[f.index()]).collect();
        let edges = quantile_bins(&col, n_bins);
        let mut p = vec![Vec::new(); edges.len()];
        let mut y = vec![Vec::new(); edges.len()];
        for (i, &v) in col.iter().enumerate() {
            let b = assign_bin(&edges, v);
            p[b].push(preds[i]);
            y[b].push(targets[i]);
        }
        for (b, bin) in edges.into_iter().enumerate() {
            bins.push(FeatureBinFidelity {
                feature: f,
                bin,
                fidelity: Fidelity::compute(&p[b], &y[b]),
            });
        }
    }
    Ok(FidelityReport { overall, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
    #[serde(rename = "Flat/Weak")]
    FlatWeak,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Positive => "Positive",
            Direction::Negative => "Negative",
            Direction::FlatWeak => "Flat/Weak",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Moderate,
    Strong,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strength::Weak => "Weak",
            Strength::Moderate => "Moderate",
            Strength::Strong => "Strong",
        })
    }
}

pub const FLAT_BELOW: f64 = 0.05;
pub const MODERATE_FROM: f64 = 0.30;
pub const STRONG_FROM: f64 = 0.70;

/// Direction and strength labels for a monotonicity score.
pub fn classify_monotonicity(score: f64) -> (Direction, Strength) {
    let a = score.abs();
    if a.is_nan() || a < FLAT_BELOW {
        return (Direction::FlatWeak, Strength::Weak);
    }
    let direction = if score > 0.0 { Direction::Positive } else { Direction::Negative };
    let strength = if a >= STRONG_FROM {
        Strength::Strong
    } else if a >= MODERATE_FROM {
        Strength::Moderate
    } else {
        Strength::Weak
    };
    (direction, strength)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Monotonicity<T> {
    pub score: T,
    pub direction: Direction,
    pub strength: Strength,
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = T::count(i + j + 2) / T::lit(2.0);
        for &p in &idx[i..=j] {
            ranks[p] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Spearman score between a PDP curve's grid and values, with labels.
pub fn monotonicity<T: Scalar>(p: &PdpCurve<T>) -> Result<Monotonicity<T>> {
    let constant = p.values.windows(2).all(|w| w[0] == w[1]);
    if !constant && p.values.len() < 3 {
        return Err(Error::InvalidConfig("monotonicity needs at least 3 curve points".into()));
    }
    let score = if constant {
        T::zero()
    } else {
        spearman(&p.grid, &p.values).unwrap_or_else(T::zero)
    };
    let (direction, strength) = classify_monotonicity(score.as_f64());
    Ok(Monotonicity {
        score,
        direction,
        strength,
    })
}

/// Samples of one edge spline: `(raw value, normalized value, s_{j,k})`.
pub fn spline_curve<T: Scalar>(m: &KanModel<T>, j: usize, k: usize, points: usize) -> Vec<(T, T, T)> {
    let n = m.normalizer();
    let points = points.max(2);
    let edge = m.edge(j, k);
    (0..points)
        .map(|i| {
            let t = T::count(i) / T::count(points - 1);
            (n.denormalize_value(k, t), t, edge.eval(t))
        })
        .collect()
}
