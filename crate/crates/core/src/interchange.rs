//! Detection records, the CSV/JSONL interchange files, and the seven
//! surrogate features derived from each record.
//!
//! Both formats share one schema:
//!
//! ```text
//! image_id,x,y,w,h,conf,cls,img_w,img_h,caption
//! ```
//!
//! Box geometry is stored as image fractions (center `x`,`y`, size `w`,`h`).
//! CSV files may carry extra trailing columns (for example an external trust
//! label); they are ignored by [`parse_detections`] and can be pulled out with
//! [`read_column`].

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of surrogate input features.
pub const FEATURE_COUNT: usize = 7;

/// Canonical feature names, in feature-vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["x", "y", "w", "h", "conf", "cls", "scale"];

/// Interchange column order. CSV headers must start with exactly these names.
pub const CSV_HEADER: [&str; 10] = [
    "image_id", "x", "y", "w", "h", "conf", "cls", "img_w", "img_h", "caption",
];

/// One surrogate input feature.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    X,
    Y,
    W,
    H,
    Conf,
    Cls,
    Scale,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::X,
        Feature::Y,
        Feature::W,
        Feature::H,
        Feature::Conf,
        Feature::Cls,
        Feature::Scale,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self.index()]
    }

    pub fn from_index(k: usize) -> Option<Feature> {
        Self::ALL.get(k).copied()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFeature {
                name: s.to_string(),
                valid: FEATURE_NAMES.iter().map(|n| n.to_string()).collect(),
            })
    }
}

/// Interchange file flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::InvalidConfig(format!(
                "unknown format `{other}` (expected csv or jsonl)"
            ))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("ndjson") => {
                Format::Jsonl
            }
            _ => Format::Csv,
        }
    }
}

/// One detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    /// Box center, fraction of image width.
    pub x: f64,
    /// Box center, fraction of image height.
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub cls: u32,
    pub img_w: u32,
    pub img_h: u32,
    pub caption: Option<String>,
}

impl DetectionRecord {
    /// Checks the record invariants. `line` is only used for error reporting.
    pub fn validate(&self, line: usize) -> Result<()> {
        let unit = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation {
                    line,
                    field: field.to_string(),
                    value: v.to_string(),
                })
            }
        };
        unit("x", self.x)?;
        unit("y", self.y)?;
        unit("w", self.w)?;
        unit("h", self.h)?;
        unit("conf", self.conf)?;
        for (field, v) in [("w", self.w), ("h", self.h)] {
            if v <= 0.0 {
                return Err(Error::Validation {
                    line,
                    field: field.to_string(),
                    value: v.to_string(),
                });
            }
        }
        for (field, v) in [("img_w", self.img_w), ("img_h", self.img_h)] {
            if v < 1 {
                return Err(Error::Validation {
                    line,
                    field: field.to_string(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// The seven surrogate inputs `(x, y, w, h, conf, cls, scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector<T>(pub [T; FEATURE_COUNT]);

impl<T: Scalar> FeatureVector<T> {
    pub fn get(&self, f: Feature) -> T {
        self.0[f.index()]
    }

    pub fn with(mut self, k: usize, v: T) -> Self {
        self.0[k] = v;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Builds the feature vector of a record. `scale` is the relative box area
/// `w·h`, i.e. `(w·640)(h·640)/640²` in the canonical 640×640 frame.
pub fn extract_features<T: Scalar>(rec: &DetectionRecord) -> FeatureVector<T> {
    FeatureVector([
        T::lit(rec.x),
        T::lit(rec.y),
        T::lit(rec.w),
        T::lit(rec.h),
        T::lit(rec.conf),
        T::lit(f64::from(rec.cls)),
        T::lit(rec.w * rec.h),
    ])
}

/// Per-feature min-max map onto `[0,1]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Normalizer<T> {
    pub min: [T; FEATURE_COUNT],
    pub max: [T; FEATURE_COUNT],
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(data: &[FeatureVector<T>]) -> Result<Self> {
        let first = data
            .first()
            .ok_or(Error::EmptyDataset("cannot fit a normalizer on zero samples"))?;
        let mut min = first.0;
        let mut max = first.0;
        for fv in &data[1..] {
            for k in 0..FEATURE_COUNT {
                min[k] = min[k].min(fv.0[k]);
                max[k] = max[k].max(fv.0[k]);
            }
        }
        Ok(Normalizer { min, max })
    }

    /// Identity-like normalizer over `[0,1]` for every feature.
    pub fn unit() -> Self {
        Normalizer {
            min: [T::zero(); FEATURE_COUNT],
            max: [T::one(); FEATURE_COUNT],
        }
    }

    /// True when feature `k` was constant on the fitting data.
    pub fn is_degenerate(&self, k: usize) -> bool {
        self.max[k] <= self.min[k]
    }

    pub fn normalize_value(&self, k: usize, v: T) -> T {
        if self.is_degenerate(k) {
            return T::lit(0.5);
        }
        let t = (v - self.min[k]) / (self.max[k] - self.min[k]);
        t.max(T::zero()).min(T::one())
    }

    /// `d normalized / d raw` at `v`: zero where the clamp is active or the
    /// feature is degenerate.
    pub fn chain_factor(&self, k: usize, v: T) -> T {
        if self.is_degenerate(k) || v < self.min[k] || v > self.max[k] {
            T::zero()
        } else {
            T::one() / (self.max[k] - self.min[k])
        }
    }

    /// Maps a normalized coordinate back to raw feature units.
    pub fn denormalize_value(&self, k: usize, t: T) -> T {
        self.min[k] + t * (self.max[k] - self.min[k])
    }

    pub fn normalize(&self, fv: &FeatureVector<T>) -> FeatureVector<T> {
        let mut out = [T::zero(); FEATURE_COUNT];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.normalize_value(k, fv.0[k]);
        }
        FeatureVector(out)
    }
}

/// Reads every record of an interchange stream, validating as it goes.
pub fn parse_detections<R: Read>(stream: R, format: Format) -> Result<Vec<DetectionRecord>> {
    match format {
        Format::Csv => parse_csv(stream),
        Format::Jsonl => parse_jsonl(stream),
    }
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_real(line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| field_err(line, field, format!("expected a number, got `{raw}`")))?;
    if !v.is_finite() {
        return Err(Error::Validation {
            line,
            field: field.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(v)
}

fn parse_uint(line: usize, field: &str, raw: &str) -> Result<u32> {
    let raw = raw.trim();
    let v: i64 = match raw.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            // Integral floats such as `3.0` are accepted.
            let f: f64 = raw
                .parse()
                .map_err(|_| field_err(line, field, format!("expected an integer, got `{raw}`")))?;
            if f.fract() != 0.0 || !f.is_finite() {
                return Err(field_err(line, field, format!("expected an integer, got `{raw}`")));
            }
            f as i64
        }
    };
    u32::try_from(v).map_err(|_| Error::Validation {
        line,
        field: field.to_string(),
        value: raw.to_string(),
    })
}

fn csv_reader<R: Read>(stream: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(stream)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Utf8 { err, .. } => field_err(line, "<row>", format!("invalid UTF-8: {err}")),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => field_err(
            line,
            "<row>",
            format!("expected {expected_len} fields, found {len}"),
        ),
        other => field_err(line, "<row>", format!("{other:?}")),
    }
}

fn parse_csv<R: Read>(stream: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv_reader(stream);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < CSV_HEADER.len()
        || header.iter().zip(CSV_HEADER).any(|(got, want)| got != want)
    {
        return Err(field_err(
            1,
            "<header>",
            format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| row.get(i).unwrap_or("");
        let caption = get(9);
        let rec = DetectionRecord {
            image_id: get(0).to_string(),
            x: parse_real(line, "x", get(1))?,
            y: parse_real(line, "y", get(2))?,
            w: parse_real(line, "w", get(3))?,
            h: parse_real(line, "h", get(4))?,
            conf: parse_real(line, "conf", get(5))?,
            cls: parse_uint(line, "cls", get(6))?,
            img_w: parse_uint(line, "img_w", get(7))?,
            img_h: parse_uint(line, "img_h", get(8))?,
            caption: (!caption.is_empty()).then(|| caption.to_string()),
        };
        rec.validate(line)?;
        out.push(rec);
    }
    Ok(out)
}

fn json_real(line: usize, obj: &Map<String, Value>, key: &str) -> Result<f64> {
    match obj.get(key) {
        Some(Value::Number(n)) => {
            let v = n
                .as_f64()
                .ok_or_else(|| field_err(line, key, "number not representable"))?;
            Ok(v)
        }
        Some(other) => Err(field_err(line, key, format!("expected a number, got {other}"))),
        None => Err(field_err(line, key, "missing key")),
    }
}

fn json_uint(line: usize, obj: &Map<String, Value>, key: &str) -> Result<u32> {
    match obj.get(key) {
        Some(Value::Number(n)) => {
            if let Some(i) = n.as_i64() {
                u32::try_from(i).map_err(|_| Error::Validation {
                    line,
                    field: key.to_string(),
                    value: n.to_string(),
                })
            } else {
                parse_uint(line, key, &n.to_string())
            }
        }
        Some(other) => Err(field_err(line, key, format!("expected an integer, got {other}"))),
        None => Err(field_err(line, key, "missing key")),
    }
}

fn parse_jsonl<R: Read>(stream: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(stream).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| field_err(lineno, "<line>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| field_err(lineno, "<line>", format!("invalid JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(field_err(lineno, "<line>", "expected a JSON object"));
        };
        let image_id = match obj.get("image_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(other) => {
                return Err(field_err(
                    lineno,
                    "image_id",
                    format!("expected a string, got {other}"),
                ))
            }
            None => return Err(field_err(lineno, "image_id", "missing key")),
        };
        let caption = match obj.get("caption") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                return Err(field_err(
                    lineno,
                    "caption",
                    format!("expected a string, got {other}"),
                ))
            }
        };
        let rec = DetectionRecord {
            image_id,
            x: json_real(lineno, &obj, "x")?,
            y: json_real(lineno, &obj, "y")?,
            w: json_real(lineno, &obj, "w")?,
            h: json_real(lineno, &obj, "h")?,
            conf: json_real(lineno, &obj, "conf")?,
            cls: json_uint(lineno, &obj, "cls")?,
            img_w: json_uint(lineno, &obj, "img_w")?,
            img_h: json_uint(lineno, &obj, "img_h")?,
            caption,
        };
        rec.validate(lineno)?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes records in the canonical schema. Floats use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_detections<W: Write>(
    records: &[DetectionRecord],
    format: Format,
    out: W,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(CSV_HEADER).map_err(csv_error)?;
            for r in records {
                wtr.write_record([
                    r.image_id.clone(),
                    r.x.to_string(),
                    r.y.to_string(),
                    r.w.to_string(),
                    r.h.to_string(),
                    r.conf.to_string(),
                    r.cls.to_string(),
                    r.img_w.to_string(),
                    r.img_h.to_string(),
                    r.caption.clone().unwrap_or_default(),
                ])
                .map_err(csv_error)?;
            }
            wtr.flush()?;
        }
        Format::Jsonl => {
            let mut out = out;
            for r in records {
                let mut obj = Map::new();
                obj.insert("image_id".into(), Value::from(r.image_id.clone()));
                obj.insert("x".into(), Value::from(r.x));
                obj.insert("y".into(), Value::from(r.y));
                obj.insert("w".into(), Value::from(r.w));
                obj.insert("h".into(), Value::from(r.h));
                obj.insert("conf".into(), Value::from(r.conf));
                obj.insert("cls".into(), Value::from(r.cls));
                obj.insert("img_w".into(), Value::from(r.img_w));
                obj.insert("img_h".into(), Value::from(r.img_h));
                if let Some(c) = &r.caption {
                    obj.insert("caption".into(), Value::from(c.clone()));
                }
                serde_json::to_writer(&mut out, &Value::Object(obj))
                    .map_err(|e| Error::Io(e.into()))?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Reads an extra numeric column (CSV) or key (JSONL) by name, one value per
/// record in file order.
pub fn read_column<R: Read>(stream: R, format: Format, name: &str) -> Result<Vec<f64>> {
    match format {
        Format::Csv => {
            let mut rdr = csv_reader(stream);
            let header = rdr.headers().map_err(csv_error)?.clone();
            let idx = header.iter().position(|h| h == name).ok_or_else(|| {
                field_err(1, name, "column not present in header")
            })?;
            let mut out = Vec::new();
            for row in rdr.records() {
                let row = row.map_err(csv_error)?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                out.push(parse_real(line, name, row.get(idx).unwrap_or(""))?);
            }
            Ok(out)
        }
        Format::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(stream).lines().enumerate() {
                let lineno = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value = serde_json::from_str(&line)
                    .map_err(|e| field_err(lineno, "<line>", format!("invalid JSON: {e}")))?;
                let Value::Object(obj) = value else {
                    return Err(field_err(lineno, "<line>", "expected a JSON object"));
                };
                let v = json_real(lineno, &obj, name)?;
                if !v.is_finite() {
                    return Err(Error::Validation {
                        line: lineno,
                        field: name.to_string(),
                        value: v.to_string(),
                    });
                }
                out.push(v);
            }
            Ok(out)
        }
    }
}
