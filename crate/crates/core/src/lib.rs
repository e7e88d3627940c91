//! Kolmogorov-Arnold surrogate of an object detector's confidence.
//!
//! Detections are reduced to seven features `(x, y, w, h, conf, cls, scale)`;
//! a 7→16 layer of cubic B-spline edges followed by a linear output is fitted
//! to the detector confidence, and the fitted splines are then read back as
//! feature statistics, hidden-unit roles, edge importance, partial
//! dependence, binned fidelity and monotonicity labels.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common precision.

pub mod error;
pub mod interchange;
pub mod interpret;
pub mod kan;
pub mod metrics;
pub mod scalar;
pub mod spline;
pub mod synth;
pub mod trust;

pub use error::{Error, Result};
pub use interchange::{
    extract_features, parse_detections, read_column, write_detections, DetectionRecord, Feature,
    Format, FEATURE_COUNT, FEATURE_NAMES,
};
pub use kan::{load_model, save_model, train, TrainConfig};
pub use scalar::Scalar;

pub type FeatureVector = interchange::FeatureVector<f64>;
pub type FeatureVector32 = interchange::FeatureVector<f32>;
pub type Normalizer = interchange::Normalizer<f64>;
pub type Normalizer32 = interchange::Normalizer<f32>;
pub type KnotVector = spline::KnotVector<f64>;
pub type KnotVector32 = spline::KnotVector<f32>;
pub type SplineEdge = spline::SplineEdge<f64>;
pub type SplineEdge32 = spline::SplineEdge<f32>;
pub type KanModel = kan::KanModel<f64>;
pub type KanModel32 = kan::KanModel<f32>;
pub type TrainHistory = kan::TrainHistory<f64>;
pub type PdpCurve = interpret::PdpCurve<f64>;
pub type FeatureStats = interpret::FeatureStats<f64>;
pub type NodeStat = interpret::NodeStat<f64>;
pub type EdgeImportanceMatrix = interpret::EdgeImportanceMatrix<f64>;
pub type InfluenceTable = interpret::InfluenceTable<f64>;
pub type FidelityReport = interpret::FidelityReport<f64>;
pub type Monotonicity = interpret::Monotonicity<f64>;
