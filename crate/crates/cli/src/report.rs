//! Table-shaped report rows, the analysis bundle, and their CSV/JSON files.
//!
//! Every CSV written here has an explicit header and can be read back with
//! [`read_csv`]. `report.json` is built from the same row values, so its
//! numbers are identical to the CSV files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kantrust::interpret::{self, DEFAULT_FIDELITY_BINS, DEFAULT_PDP_POINTS};
use kantrust::{extract_features, DetectionRecord, Feature, FeatureVector, KanModel, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStatRow {
    pub feature: String,
    pub spline_activation: f64,
    pub saliency: f64,
    pub pdp_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStatRow {
    pub node: usize,
    pub activation: f64,
    pub importance: f64,
    pub feature: String,
    pub correlation: f64,
    pub correlation_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeImportanceRow {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub cls: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub feature: String,
    pub spline_activation: f64,
    pub saliency: f64,
    pub pdp_delta: f64,
    pub edge_importance: f64,
    pub influence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub scope: String,
    pub feature: String,
    pub bin_index: Option<usize>,
    pub bin_lo: Option<f64>,
    pub bin_hi: Option<f64>,
    pub n: usize,
    /// Empty when undefined (fewer than two samples or constant targets).
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub feature: String,
    pub score: f64,
    pub direction: String,
    pub strength: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t_raw: f64,
    pub t_normalized: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub image_id: String,
    pub index: usize,
    pub pred: f64,
    pub conf: f64,
    pub residual: f64,
    pub low_trust: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCurve {
    pub feature: String,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurve {
    pub unit: usize,
    pub feature: String,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub architecture: [usize; 3],
    pub grid: usize,
    pub degree: usize,
    pub seed: u64,
    pub target: Option<String>,
    pub n_samples: usize,
}

/// Everything `analyze` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub model: ModelSummary,
    pub feature_stats: Vec<FeatureStatRow>,
    pub node_stats: Vec<NodeStatRow>,
    pub edge_importance: Vec<EdgeImportanceRow>,
    pub influence: Vec<InfluenceRow>,
    pub fidelity_bins: Vec<FidelityRow>,
    pub monotonicity: Vec<MonotonicityRow>,
    pub pdp: Vec<FeatureCurve>,
    pub splines: Vec<EdgeCurve>,
}

pub const FEATURE_STATS_HEADER: &[&str] = &["feature", "spline_activation", "saliency", "pdp_delta"];
pub const NODE_STATS_HEADER: &[&str] =
    &["node", "activation", "importance", "feature", "correlation", "correlation_defined"];
pub const EDGE_IMPORTANCE_HEADER: &[&str] = &["node", "x", "y", "w", "h", "conf", "cls", "scale"];
pub const INFLUENCE_HEADER: &[&str] =
    &["feature", "spline_activation", "saliency", "pdp_delta", "edge_importance", "influence"];
pub const FIDELITY_HEADER: &[&str] =
    &["scope", "feature", "bin_index", "bin_lo", "bin_hi", "n", "r2", "mae", "rmse"];
pub const MONOTONICITY_HEADER: &[&str] = &["feature", "score", "direction", "strength"];
pub const CURVE_HEADER: &[&str] = &["t_raw", "t_normalized", "value"];
pub const HISTORY_HEADER: &[&str] = &["epoch", "train_mse", "val_mse"];
pub const VERDICT_HEADER: &[&str] =
    &["image_id", "index", "pred", "conf", "residual", "low_trust", "reason"];

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    pub pdp_points: usize,
    pub spline_points: usize,
    pub bins: usize,
    pub edge_scale_by_weight: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            pdp_points: DEFAULT_PDP_POINTS,
            spline_points: DEFAULT_PDP_POINTS,
            bins: DEFAULT_FIDELITY_BINS,
            edge_scale_by_weight: false,
        }
    }
}

/// PDP curve of feature `k` as CSV rows.
pub fn pdp_rows(model: &KanModel, data: &[FeatureVector], k: usize, points: usize) -> Result<(interpret::PdpCurve<f64>, Vec<CurveRow>)> {
    let curve = interpret::partial_dependence(model, data, k, points)?;
    let rows = curve
        .grid
        .iter()
        .zip(&curve.values)
        .map(|(&t, &v)| CurveRow {
            t_raw: t,
            t_normalized: model.normalizer().normalize_value(k, t),
            value: v,
        })
        .collect();
    Ok((curve, rows))
}

pub fn spline_rows(model: &KanModel, j: usize, k: usize, points: usize) -> Vec<CurveRow> {
    interpret::spline_curve(model, j, k, points)
        .into_iter()
        .map(|(t_raw, t_normalized, value)| CurveRow {
            t_raw,
            t_normalized,
            value,
        })
        .collect()
}

/// Runs every analysis over `records` against `targets`.
pub fn analyze(
    model: &KanModel,
    records: &[DetectionRecord],
    targets: &[f64],
    opts: &AnalyzeOptions,
) -> Result<ReportBundle> {
    let data: Vec<FeatureVector> = records.iter().map(extract_features).collect();

    let mut curves = Vec::with_capacity(Feature::ALL.len());
    let mut pdp = Vec::with_capacity(Feature::ALL.len());
    for f in Feature::ALL {
        let (curve, rows) = pdp_rows(model, &data, f.index(), opts.pdp_points)?;
        curves.push(curve);
        pdp.push(FeatureCurve {
            feature: f.name().to_string(),
            rows,
        });
    }

    let fs = interpret::feature_stats(model, &data, &curves)?;
    let em = interpret::edge_importance(model, opts.edge_scale_by_weight);
    let infl = interpret::influence_table(&fs, &em);
    let nodes = interpret::node_stats(model, &data)?;
    let fid = interpret::fidelity_bins(model, &data, targets, opts.bins)?;

    let feature_stats = Feature::ALL
        .iter()
        .map(|f| {
            let k = f.index();
            FeatureStatRow {
                feature: f.name().to_string(),
                spline_activation: fs.spline_activation[k],
                saliency: fs.saliency[k],
                pdp_delta: fs.pdp_delta[k],
            }
        })
        .collect();

    let node_stats = nodes
        .iter()
        .enumerate()
        .map(|(j, n)| NodeStatRow {
            node: j,
            activation: n.activation,
            importance: n.importance,
            feature: n.top_feature.name().to_string(),
            correlation: n.correlation,
            correlation_defined: n.correlation_defined,
        })
        .collect();

    let edge_importance = em
        .rows
        .iter()
        .enumerate()
        .map(|(j, r)| EdgeImportanceRow {
            node: j,
            x: r[0],
            y: r[1],
            w: r[2],
            h: r[3],
            conf: r[4],
            cls: r[5],
            scale: r[6],
        })
        .collect();

    let influence = infl
        .rows
        .iter()
        .map(|r| InfluenceRow {
            feature: r.feature.name().to_string(),
            spline_activation: r.spline_activation,
            saliency: r.saliency,
            pdp_delta: r.pdp_delta,
            edge_importance: r.edge_importance,
            influence: r.influence,
        })
        .collect();

    let mut fidelity_bins = vec![FidelityRow {
        scope: "overall".into(),
        feature: String::new(),
        bin_index: None,
        bin_lo: None,
        bin_hi: None,
        n: fid.overall.n,
        r2: fid.overall.r2,
        mae: fid.overall.mae,
        rmse: fid.overall.rmse,
    }];
    fidelity_bins.extend(fid.bins.iter().map(|b| FidelityRow {
        scope: "per_feature".into(),
        feature: b.feature.name().to_string(),
        bin_index: Some(b.bin.index),
        bin_lo: Some(b.bin.lo),
        bin_hi: Some(b.bin.hi),
        n: b.fidelity.n,
        r2: b.fidelity.r2,
        mae: b.fidelity.mae,
        rmse: b.fidelity.rmse,
    }));

    let monotonicity = curves
        .iter()
        .map(|c| {
            let m = interpret::monotonicity(c)?;
            Ok(MonotonicityRow {
                feature: Feature::ALL[c.feature_index].name().to_string(),
                score: m.score,
                direction: m.direction.to_string(),
                strength: m.strength.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut splines = Vec::with_capacity(model.hidden() * Feature::ALL.len());
    for j in 0..model.hidden() {
        for f in Feature::ALL {
            splines.push(EdgeCurve {
                unit: j,
                feature: f.name().to_string(),
                rows: spline_rows(model, j, f.index(), opts.spline_points),
            });
        }
    }

    Ok(ReportBundle {
        model: ModelSummary {
            architecture: [kantrust::FEATURE_COUNT, model.hidden(), 1],
            grid: model.knots().grid(),
            degree: model.knots().degree(),
            seed: model.seed(),
            target: model.calibration().map(|c| c.target.clone()),
            n_samples: records.len(),
        },
        feature_stats,
        node_stats,
        edge_importance,
        influence,
        fidelity_bins,
        monotonicity,
        pdp,
        splines,
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_bytes<R: Serialize>(header: &[&str], rows: &[R]) -> Vec<u8> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    for r in rows {
        wtr.serialize(r).expect("report rows serialize");
    }
    wtr.into_inner().expect("in-memory flush")
}

pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> std::io::Result<()> {
    write_atomic(path, &csv_bytes(header, rows))
}

/// Reads a report CSV back into rows.
pub fn read_csv<R: DeserializeOwned>(path: &Path) -> std::result::Result<Vec<R>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

pub fn spline_file_name(unit: usize, feature: &str) -> String {
    format!("splines_unit{unit}_{feature}.csv")
}

pub fn pdp_file_name(feature: &str) -> String {
    format!("pdp_{feature}.csv")
}

/// Writes the bundle's CSV files and `report.json` under `outdir`; returns
/// the written paths in order.
pub fn write_bundle(bundle: &ReportBundle, outdir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> std::io::Result<()> {
        let p = outdir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
        Ok(())
    };
    put("feature_stats.csv".into(), csv_bytes(FEATURE_STATS_HEADER, &bundle.feature_stats))?;
    put("node_stats.csv".into(), csv_bytes(NODE_STATS_HEADER, &bundle.node_stats))?;
    put("edge_importance.csv".into(), csv_bytes(EDGE_IMPORTANCE_HEADER, &bundle.edge_importance))?;
    put("influence.csv".into(), csv_bytes(INFLUENCE_HEADER, &bundle.influence))?;
    put("fidelity_bins.csv".into(), csv_bytes(FIDELITY_HEADER, &bundle.fidelity_bins))?;
    put("monotonicity.csv".into(), csv_bytes(MONOTONICITY_HEADER, &bundle.monotonicity))?;
    for c in &bundle.pdp {
        put(pdp_file_name(&c.feature), csv_bytes(CURVE_HEADER, &c.rows))?;
    }
    for c in &bundle.splines {
        put(spline_file_name(c.unit, &c.feature), csv_bytes(CURVE_HEADER, &c.rows))?;
    }
    let mut json = serde_json::to_vec_pretty(bundle).expect("bundle serializes");
    json.push(b'\n');
    put("report.json".into(), json)?;
    Ok(written)
}
