//! Model container.
//!
//! ```text
//! KANTRUST
//! version 1
//! sha256 <hex digest of the payload line>
//! <JSON payload>
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Calibration, KanModel};
use crate::error::{Error, Result};
use crate::interchange::{Normalizer, FEATURE_COUNT, FEATURE_NAMES};
use crate::scalar::Scalar;
use crate::spline::KnotVector;

pub const MAGIC: &str = "KANTRUST";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Architecture {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    grid: usize,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Payload<T> {
    scalar: String,
    architecture: Architecture,
    feature_names: Vec<String>,
    seed: u64,
    normalizer: Normalizer<T>,
    out_bias: T,
    out_weights: Vec<T>,
    coeffs: Vec<T>,
    calibration: Option<Calibration<T>>,
}

fn scalar_name<T: 'static>() -> &'static str {
    std::any::type_name::<T>()
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes a model. Floats are written in shortest round-trip form, so
/// [`load_model`] restores every parameter bit-exactly.
pub fn save_model<T: Scalar>(m: &KanModel<T>) -> Vec<u8> {
    let payload = Payload {
        scalar: scalar_name::<T>().to_string(),
        architecture: Architecture {
            inputs: FEATURE_COUNT,
            hidden: m.hidden,
            outputs: 1,
            grid: m.knots.grid(),
            degree: m.knots.degree(),
        },
        feature_names: m.feature_names.clone(),
        seed: m.seed,
        normalizer: m.normalizer.clone(),
        out_bias: m.out_bias,
        out_weights: m.out_weights.clone(),
        coeffs: m.coeffs.clone(),
        calibration: m.calibration.clone(),
    };
    let body = serde_json::to_string(&payload).expect("model payload serializes");
    format!(
        "{MAGIC}\nversion {FORMAT_VERSION}\nsha256 {}\n{body}\n",
        digest(body.as_bytes())
    )
    .into_bytes()
}

pub fn load_model<T: Scalar>(bytes: &[u8]) -> Result<KanModel<T>> {
    let bad = |m: String| Error::ModelFormat(m);
    let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8".into()))?;
    let mut lines = text.splitn(4, '\n');
    if lines.next() != Some(MAGIC) {
        return Err(bad(format!("missing `{MAGIC}` magic header")));
    }
    let version = lines
        .next()
        .and_then(|l| l.strip_prefix("version "))
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| bad("missing version line".into()))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let checksum = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256 "))
        .ok_or_else(|| bad("missing checksum line".into()))?;
    let body = lines
        .next()
        .ok_or_else(|| bad("missing payload".into()))?
        .strip_suffix('\n')
        .ok_or_else(|| bad("truncated payload".into()))?;
    if digest(body.as_bytes()) != checksum.trim() {
        return Err(bad("checksum mismatch".into()));
    }
    let p: Payload<T> =
        serde_json::from_str(body).map_err(|e| bad(format!("invalid payload: {e}")))?;
    if p.scalar != scalar_name::<T>() {
        return Err(bad(format!(
            "model stores {} parameters, requested {}",
            p.scalar,
            scalar_name::<T>()
        )));
    }
    let a = &p.architecture;
    if a.inputs != FEATURE_COUNT || a.outputs != 1 {
        return Err(bad(format!(
            "unsupported architecture [{}, {}, {}]",
            a.inputs, a.hidden, a.outputs
        )));
    }
    if p.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES) {
        return Err(Error::FeatureMismatch {
            expected: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            found: p.feature_names,
        });
    }
    let knots = KnotVector::new(a.grid, a.degree)?;
    KanModel::from_parts(
        knots,
        a.hidden,
        p.coeffs,
        p.out_weights,
        p.out_bias,
        p.normalizer,
        p.feature_names,
        p.seed,
        p.calibration,
    )
}
