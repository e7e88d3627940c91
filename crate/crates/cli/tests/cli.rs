use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kantrust::{load_model, save_model, KanModel, Normalizer};
use kantrust_cli::report::{
    read_csv, CurveRow, FidelityRow, HistoryRow, InfluenceRow, ReportBundle, VerdictRow,
};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn kantrust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kantrust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HEADER: &str = "image_id,x,y,w,h,conf,cls,img_w,img_h,caption\n";

fn zero_model(dir: &Path, bias: f64) -> PathBuf {
    let mut m = KanModel::zeros(16, 5, 3, Normalizer::unit()).unwrap();
    m.set_out_bias(bias);
    let p = dir.join("zero.kan");
    fs::write(&p, save_model(&m)).unwrap();
    p
}

#[test]
fn ingest_counts_records() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("three.csv");
    fs::write(
        &p,
        format!(
            "{HEADER}a,0.5,0.5,0.1,0.1,0.9,0,640,480,\na,0.3,0.6,0.2,0.1,0.4,2,640,480,\nb,0.1,0.2,0.05,0.3,0.7,0,320,240,\n"
        ),
    )
    .unwrap();
    let o = kantrust(&["ingest", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("records: 3"));
    assert!(stdout(&o).contains("images: 2"));
}

#[test]
fn ingest_rejects_negative_class() {
    let o = kantrust(&["ingest", s(&data("bad_cls.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("cls"), "{e}");
}

#[test]
fn ingest_counts_captions() {
    let o = kantrust(&["ingest", s(&data("captions.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("captions: 40"));
}

#[test]
fn ingest_writes_validated_copy_in_other_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.jsonl");
    let o = kantrust(&["ingest", s(&data("sample.csv")), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = kantrust(&["ingest", s(&out)]);
    assert!(stdout(&back).contains("records: 120"));
}

#[test]
fn train_makes_progress() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.kan");
    let o = kantrust(&["train", "--data", s(&data("sample.csv")), "--model", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let hist: Vec<HistoryRow> = read_csv(&dir.path().join("m_history.csv")).unwrap();
    assert_eq!(hist.len(), 200);
    assert!(hist.last().unwrap().val_mse < hist[0].val_mse);
    let m: KanModel = load_model(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(m.calibration().unwrap().target, "conf");
}

#[test]
fn same_seed_same_model_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = kantrust(&[
            "--seed", "42", "train", "--data", s(&data("sample.csv")), "--model", s(&p), "--epochs", "20",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(p).unwrap()
    };
    assert_eq!(run("a.kan"), run("b.kan"));
}

#[test]
fn target_column_replaces_conf() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.kan");
    let o = kantrust(&[
        "train", "--data", s(&data("labeled.csv")), "--model", s(&model),
        "--target-column", "trust_label", "--epochs", "60",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: KanModel = load_model(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(m.calibration().unwrap().target, "trust_label");

    // The label is 1 - 0.8 w, far from conf, so scoring against conf warns.
    let o = kantrust(&[
        "score", "--model", s(&model), "--data", s(&data("labeled.csv")),
        "-o", s(&dir.path().join("v.csv")),
    ]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));

    let missing = kantrust(&[
        "train", "--data", s(&data("sample.csv")), "--model", s(&model), "--target-column", "nope",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("labeled.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines[4].rsplit_once(',').unwrap().0.to_string();
    lines[4] = format!("{row},1e300");
    let p = dir.path().join("wild.csv");
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    let o = kantrust(&[
        "train", "--data", s(&p), "--model", s(&dir.path().join("m.kan")),
        "--target-column", "trust_label", "--lr", "1000", "--epochs", "3",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = kantrust(&[
        "train", "--data", s(&data("sample.csv")), "--model", s(&dir.path().join("m.kan")),
        "--val-fraction", "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(kantrust(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kantrust(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_model_analysis_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path(), 0.5);
    let out = dir.path().join("out");
    let o = kantrust(&[
        "--outdir", s(&out), "analyze", "--model", s(&model), "--data", s(&data("sample.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let infl: Vec<InfluenceRow> = read_csv(&out.join("influence.csv")).unwrap();
    assert_eq!(infl.len(), 7);
    for r in &infl {
        assert_eq!(r.influence, 0.5, "{r:?}");
        assert_eq!(r.pdp_delta, 0.0);
    }
}

#[test]
fn analyze_bundle_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.kan");
    let o = kantrust(&[
        "train", "--data", s(&data("sample.csv")), "--model", s(&model), "--epochs", "40",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let o = kantrust(&[
        "--outdir", s(&out), "analyze", "--model", s(&model), "--data", s(&data("sample.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let bins: Vec<FidelityRow> = read_csv(&out.join("fidelity_bins.csv")).unwrap();
    assert_eq!(bins[0].scope, "overall");
    assert_eq!(bins[0].n, 120);
    let mut per_feature: BTreeMap<String, usize> = BTreeMap::new();
    for b in &bins[1..] {
        *per_feature.entry(b.feature.clone()).or_default() += b.n;
    }
    assert_eq!(per_feature.len(), 7);
    assert!(per_feature.values().all(|&n| n == 120), "{per_feature:?}");

    let bundle: ReportBundle =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(bundle.fidelity_bins, bins);
    assert_eq!(bundle.influence, read_csv::<InfluenceRow>(&out.join("influence.csv")).unwrap());
    assert_eq!(bundle.feature_stats, read_csv::<_>(&out.join("feature_stats.csv")).unwrap());
    assert_eq!(bundle.node_stats, read_csv::<_>(&out.join("node_stats.csv")).unwrap());
    assert_eq!(bundle.edge_importance, read_csv::<_>(&out.join("edge_importance.csv")).unwrap());
    assert_eq!(bundle.monotonicity, read_csv::<_>(&out.join("monotonicity.csv")).unwrap());
    for c in &bundle.pdp {
        let rows: Vec<CurveRow> = read_csv(&out.join(format!("pdp_{}.csv", c.feature))).unwrap();
        assert_eq!(rows, c.rows);
    }
    for c in &bundle.splines {
        let rows: Vec<CurveRow> =
            read_csv(&out.join(format!("splines_unit{}_{}.csv", c.unit, c.feature))).unwrap();
        assert_eq!(rows, c.rows);
    }
    assert_eq!(bundle.splines.len(), 112);
}

#[test]
fn exact_prediction_is_trusted() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path(), 0.5);
    let p = dir.path().join("d.csv");
    fs::write(
        &p,
        format!("{HEADER}a,0.5,0.5,0.1,0.1,0.5,0,640,480,\na,0.5,0.5,0.1,0.1,0.75,0,640,480,\n"),
    )
    .unwrap();
    let v = dir.path().join("v.csv");
    let o = kantrust(&["score", "--model", s(&model), "--data", s(&p), "-o", s(&v)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<VerdictRow> = read_csv(&v).unwrap();
    assert_eq!(rows[0].residual, 0.0);
    assert!(!rows[0].low_trust);
    assert_eq!(rows[0].reason, "ok");
    // Default tau without calibration is 0.05; a 0.25 residual exceeds it.
    assert!(rows[1].low_trust);

    let o = kantrust(&["score", "--model", s(&model), "--data", s(&p), "-o", s(&v), "--tau", "0"]);
    assert!(o.status.success());
    let rows: Vec<VerdictRow> = read_csv(&v).unwrap();
    assert!(!rows[0].low_trust);
    assert!(rows[1].low_trust);
}

#[test]
fn score_on_empty_data_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path(), 0.5);
    let p = dir.path().join("empty.csv");
    fs::write(&p, HEADER).unwrap();
    let v = dir.path().join("v.csv");
    let o = kantrust(&["score", "--model", s(&model), "--data", s(&p), "-o", s(&v)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&v).unwrap(),
        "image_id,index,pred,conf,residual,low_trust,reason\n"
    );
}

#[test]
fn pdp_and_spline_selectors() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path(), 0.3);
    let pdp = dir.path().join("pdp");
    let o = kantrust(&[
        "--outdir", s(&pdp), "pdp", "--model", s(&model), "--data", s(&data("sample.csv")),
        "--feature", "conf",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(&pdp).unwrap().collect();
    assert_eq!(files.len(), 1);
    let rows: Vec<CurveRow> = read_csv(&pdp.join("pdp_conf.csv")).unwrap();
    assert_eq!(rows.len(), 64);

    let one = dir.path().join("one");
    let o = kantrust(&[
        "--outdir", s(&one), "splines", "--model", s(&model), "--unit", "0", "--feature", "cls",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(one.join("splines_unit0_cls.csv").exists());
    assert_eq!(fs::read_dir(&one).unwrap().count(), 1);

    let all = dir.path().join("all");
    let o = kantrust(&["--outdir", s(&all), "splines", "--model", s(&model)]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&all).unwrap().count(), 112);

    let o = kantrust(&["splines", "--model", s(&model), "--feature", "width"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("x, y, w, h, conf, cls, scale"));

    let o = kantrust(&["splines", "--model", s(&model), "--unit", "16"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path(), 0.3);
    let mut bytes = fs::read(&model).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&model, bytes).unwrap();
    let o = kantrust(&["splines", "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model file"));
}

#[test]
fn report_runs_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = kantrust(&[
        "--outdir", s(&out), "--seed", "5", "report", "--data", s(&data("captions.jsonl")),
        "--epochs", "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["detections.jsonl", "model.kan", "model_history.csv", "report.json", "verdicts.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let verdicts: Vec<VerdictRow> = read_csv(&out.join("verdicts.csv")).unwrap();
    assert_eq!(verdicts.len(), 40);
}
