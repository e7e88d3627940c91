use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use kantrust::trust::{judge, TrustRule};
use kantrust::{
    extract_features, load_model, parse_detections, read_column, save_model, synth, train,
    write_detections, DetectionRecord, Error, Feature, FeatureVector, Format, KanModel,
    TrainConfig, FEATURE_NAMES,
};

use crate::cli::{AnalysisArgs, Cli, Command, TrainArgs, TrustArgs};
use crate::report::{
    self, pdp_file_name, spline_file_name, write_atomic, write_csv, AnalyzeOptions, HistoryRow,
    VerdictRow, CURVE_HEADER, HISTORY_HEADER, VERDICT_HEADER,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// A failed command: message for stderr plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::UnknownFeature { .. } => EXIT_USAGE,
        Error::Diverged { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_VALIDATION,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn at(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        Failure {
            code: f.code,
            message: format!("{}: {}", path.display(), f.message),
        }
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
    }
}

fn usage(message: String) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message,
    }
}

type CmdResult = Result<(), Failure>;

struct Dataset {
    records: Vec<DetectionRecord>,
    bytes: Vec<u8>,
    format: Format,
    path: PathBuf,
}

impl Dataset {
    fn load(path: &Path, format: Option<Format>) -> Result<Dataset, Failure> {
        let format = format.unwrap_or_else(|| Format::from_path(path));
        let bytes = std::fs::read(path).map_err(io_at(path))?;
        let records = parse_detections(bytes.as_slice(), format).map_err(at(path))?;
        Ok(Dataset {
            records,
            bytes,
            format,
            path: path.to_path_buf(),
        })
    }

    fn features(&self) -> Vec<FeatureVector> {
        self.records.iter().map(extract_features).collect()
    }

    /// Target values: `conf` itself, or an extra column of the data file.
    fn targets(&self, name: &str) -> Result<Vec<f64>, Failure> {
        if name == "conf" {
            return Ok(self.records.iter().map(|r| r.conf).collect());
        }
        let col = read_column(self.bytes.as_slice(), self.format, name).map_err(at(&self.path))?;
        if col.len() != self.records.len() {
            return Err(Failure {
                code: EXIT_VALIDATION,
                message: format!(
                    "{}: column `{name}` has {} values for {} records",
                    self.path.display(),
                    col.len(),
                    self.records.len()
                ),
            });
        }
        Ok(col)
    }
}

fn load_kan(path: &Path) -> Result<KanModel, Failure> {
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    load_model(&bytes).map_err(at(path))
}

/// Resolves `all` or a single feature name.
fn select_features(sel: &str) -> Result<Vec<Feature>, Failure> {
    if sel == "all" {
        Ok(Feature::ALL.to_vec())
    } else {
        Ok(vec![sel.parse::<Feature>()?])
    }
}

struct Ctx<'a> {
    seed: u64,
    format: Option<Format>,
    outdir: PathBuf,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        let _ = writeln!($w, $($arg)*);
    };
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut ctx = Ctx {
        seed: cli.seed,
        format: cli.format.map(Format::from),
        outdir: cli.outdir.clone().unwrap_or_else(|| PathBuf::from(".")),
        out,
        err,
    };
    match cli.command {
        Command::Ingest { input, output } => ingest(&mut ctx, &input, output.as_deref()).map(|_| ()),
        Command::Train {
            data,
            model,
            history,
            train,
        } => {
            let ds = Dataset::load(&data, ctx.format)?;
            let model = model.unwrap_or_else(|| ctx.outdir.join("model.kan"));
            let history = history.unwrap_or_else(|| history_path(&model));
            train_cmd(&mut ctx, &ds, &train, &model, &history).map(|_| ())
        }
        Command::Analyze {
            model,
            data,
            analysis,
        } => {
            let m = load_kan(&model)?;
            let ds = Dataset::load(&data, ctx.format)?;
            analyze_cmd(&mut ctx, &m, &ds, &analysis)
        }
        Command::Score {
            model,
            data,
            trust,
            output,
        } => {
            let m = load_kan(&model)?;
            let ds = Dataset::load(&data, ctx.format)?;
            let output = output.unwrap_or_else(|| ctx.outdir.join("verdicts.csv"));
            score_cmd(&mut ctx, &m, &ds, &trust, &output)
        }
        Command::Pdp {
            model,
            data,
            feature,
            points,
        } => {
            let features = select_features(&feature)?;
            let m = load_kan(&model)?;
            let ds = Dataset::load(&data, ctx.format)?;
            pdp_cmd(&mut ctx, &m, &ds, &features, points)
        }
        Command::Splines {
            model,
            unit,
            feature,
            points,
        } => {
            let features = select_features(&feature)?;
            let m = load_kan(&model)?;
            splines_cmd(&mut ctx, &m, unit, &features, points)
        }
        Command::Report {
            data,
            train,
            analysis,
            trust,
        } => report_cmd(&mut ctx, &data, &train, &analysis, &trust),
        Command::Synth {
            n,
            captions,
            output,
        } => {
            let recs = synth::generate(n, ctx.seed, captions);
            let format = ctx.format.unwrap_or_else(|| Format::from_path(&output));
            write_records(&recs, format, &output)?;
            say!(ctx.out, "wrote {} records to {}", recs.len(), output.display());
            Ok(())
        }
    }
}

fn history_path(model: &Path) -> PathBuf {
    let stem = model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}_history.csv"))
}

fn write_records(recs: &[DetectionRecord], format: Format, path: &Path) -> CmdResult {
    let mut buf = Vec::new();
    write_detections(recs, format, &mut buf).map_err(at(path))?;
    write_atomic(path, &buf).map_err(io_at(path))
}

fn ingest(ctx: &mut Ctx, input: &Path, output: Option<&Path>) -> Result<Dataset, Failure> {
    let ds = Dataset::load(input, ctx.format)?;
    let n = ds.records.len();
    let images = {
        let mut ids: Vec<&str> = ds.records.iter().map(|r| r.image_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let captions = ds.records.iter().filter(|r| r.caption.is_some()).count();
    say!(ctx.out, "records: {n}");
    say!(ctx.out, "images: {images}");
    say!(ctx.out, "captions: {captions}");
    if n > 0 {
        let data = ds.features();
        say!(ctx.out, "feature,min,max");
        for (k, name) in FEATURE_NAMES.iter().enumerate() {
            let lo = data.iter().map(|f| f.0[k]).fold(f64::INFINITY, f64::min);
            let hi = data.iter().map(|f| f.0[k]).fold(f64::NEG_INFINITY, f64::max);
            say!(ctx.out, "{name},{lo},{hi}");
        }
    }
    if let Some(path) = output {
        write_records(&ds.records, Format::from_path(path), path)?;
        say!(ctx.out, "validated copy written to {}", path.display());
    }
    Ok(ds)
}

fn train_cmd(
    ctx: &mut Ctx,
    ds: &Dataset,
    args: &TrainArgs,
    model_path: &Path,
    history_path: &Path,
) -> Result<KanModel, Failure> {
    let target = args.target_column.clone().unwrap_or_else(|| "conf".into());
    let targets = ds.targets(&target)?;
    let pairs: Vec<(FeatureVector, f64)> = ds.features().into_iter().zip(targets).collect();
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        val_fraction: args.val_fraction,
        seed: ctx.seed,
        l2_penalty: args.l2,
        hidden: args.hidden,
        grid: args.grid,
        degree: args.degree,
        target_name: target.clone(),
    };
    let (model, hist) = train(&pairs, &cfg)?;
    write_atomic(model_path, &save_model(&model)).map_err(io_at(model_path))?;
    let rows: Vec<HistoryRow> = hist
        .train_mse
        .iter()
        .zip(&hist.val_mse)
        .enumerate()
        .map(|(i, (&t, &v))| HistoryRow {
            epoch: i + 1,
            train_mse: t,
            val_mse: v,
        })
        .collect();
    write_csv(history_path, HISTORY_HEADER, &rows).map_err(io_at(history_path))?;
    if let Some(last) = rows.last() {
        say!(
            ctx.out,
            "trained {}-{}-1 on {} samples against `{target}` for {} epochs: train_mse {} val_mse {}",
            FEATURE_NAMES.len(),
            model.hidden(),
            pairs.len(),
            rows.len(),
            last.train_mse,
            last.val_mse
        );
    }
    say!(ctx.out, "model: {}", model_path.display());
    say!(ctx.out, "history: {}", history_path.display());
    Ok(model)
}

fn analyze_cmd(ctx: &mut Ctx, model: &KanModel, ds: &Dataset, args: &AnalysisArgs) -> CmdResult {
    if ds.records.is_empty() {
        return Err(Error::EmptyDataset("analysis needs at least one record").into());
    }
    let target = model
        .calibration()
        .map(|c| c.target.clone())
        .unwrap_or_else(|| "conf".into());
    let targets = ds.targets(&target)?;
    let opts = AnalyzeOptions {
        pdp_points: args.pdp_points,
        spline_points: args.spline_points,
        bins: args.bins,
        edge_scale_by_weight: args.edge_scale_by_weight,
    };
    let bundle = report::analyze(model, &ds.records, &targets, &opts)?;
    let written = report::write_bundle(&bundle, &ctx.outdir).map_err(io_at(&ctx.outdir))?;
    let overall = &bundle.fidelity_bins[0];
    say!(
        ctx.out,
        "analyzed {} records against `{target}`: r2 {} mae {} rmse {}",
        ds.records.len(),
        overall.r2.map_or_else(|| "undefined".to_string(), |r| r.to_string()),
        overall.mae,
        overall.rmse
    );
    say!(ctx.out, "wrote {} files to {}", written.len(), ctx.outdir.display());
    Ok(())
}

fn score_cmd(
    ctx: &mut Ctx,
    model: &KanModel,
    ds: &Dataset,
    args: &TrustArgs,
    output: &Path,
) -> CmdResult {
    let cal = model.calibration();
    if let Some(c) = cal {
        if c.target != "conf" {
            say!(
                ctx.err,
                "warning: model was trained against `{}`, residuals against conf may not be meaningful",
                c.target
            );
        }
    }
    let rule = TrustRule::resolve(args.tau, args.r_min, cal);
    let bins = cal.map(|c| c.conf_bins.as_slice()).unwrap_or(&[]);
    let mut rows = Vec::with_capacity(ds.records.len());
    for (i, rec) in ds.records.iter().enumerate() {
        let pred = model.predict(&extract_features(rec))?;
        let (residual, low_trust, reason) = judge(pred, rec.conf, &rule, bins);
        rows.push(VerdictRow {
            image_id: rec.image_id.clone(),
            index: i,
            pred,
            conf: rec.conf,
            residual,
            low_trust,
            reason,
        });
    }
    write_csv(output, VERDICT_HEADER, &rows).map_err(io_at(output))?;
    if rows.is_empty() {
        say!(ctx.err, "warning: no detections to score");
    }
    let flagged = rows.iter().filter(|r| r.low_trust).count();
    say!(
        ctx.out,
        "scored {} detections (tau {}, r_min {}): {flagged} low-trust",
        rows.len(),
        rule.tau,
        rule.r_min
    );
    say!(ctx.out, "verdicts: {}", output.display());
    Ok(())
}

fn pdp_cmd(
    ctx: &mut Ctx,
    model: &KanModel,
    ds: &Dataset,
    features: &[Feature],
    points: usize,
) -> CmdResult {
    let data = ds.features();
    for f in features {
        let (_, rows) = report::pdp_rows(model, &data, f.index(), points)?;
        let path = ctx.outdir.join(pdp_file_name(f.name()));
        write_csv(&path, CURVE_HEADER, &rows).map_err(io_at(&path))?;
        say!(ctx.out, "{}", path.display());
    }
    Ok(())
}

fn splines_cmd(
    ctx: &mut Ctx,
    model: &KanModel,
    unit: Option<usize>,
    features: &[Feature],
    points: usize,
) -> CmdResult {
    let units: Vec<usize> = match unit {
        Some(j) if j >= model.hidden() => {
            return Err(usage(format!(
                "unit {j} out of range; the model has units 0..{}",
                model.hidden() - 1
            )))
        }
        Some(j) => vec![j],
        None => (0..model.hidden()).collect(),
    };
    if points < 2 {
        return Err(usage("at least 2 points are required per curve".into()));
    }
    for &j in &units {
        for f in features {
            let rows = report::spline_rows(model, j, f.index(), points);
            let path = ctx.outdir.join(spline_file_name(j, f.name()));
            write_csv(&path, CURVE_HEADER, &rows).map_err(io_at(&path))?;
        }
    }
    say!(
        ctx.out,
        "wrote {} spline curves to {}",
        units.len() * features.len(),
        ctx.outdir.display()
    );
    Ok(())
}

fn report_cmd(
    ctx: &mut Ctx,
    data: &Path,
    train_args: &TrainArgs,
    analysis: &AnalysisArgs,
    trust: &TrustArgs,
) -> CmdResult {
    let format = ctx.format.unwrap_or_else(|| Format::from_path(data));
    let copy = ctx.outdir.join(match format {
        Format::Csv => "detections.csv",
        Format::Jsonl => "detections.jsonl",
    });
    let ds = ingest(ctx, data, Some(&copy))?;
    let model_path = ctx.outdir.join("model.kan");
    let model = train_cmd(ctx, &ds, train_args, &model_path, &history_path(&model_path))?;
    analyze_cmd(ctx, &model, &ds, analysis)?;
    let verdicts = ctx.outdir.join("verdicts.csv");
    score_cmd(ctx, &model, &ds, trust, &verdicts)
}
