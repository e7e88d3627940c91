//! Per-detection trust verdicts.
//!
//! A detection is flagged when the surrogate disagrees with the detector by
//! more than `tau`, or when its confidence falls in a bin where the surrogate
//! fit poorly during training (`R² < r_min`).

use serde::Serialize;

use crate::kan::{BinFidelity, Calibration};
use crate::metrics::assign_bin;
use crate::scalar::Scalar;

/// Residual threshold used when neither a flag nor a stored validation RMSE
/// is available.
pub const DEFAULT_TAU: f64 = 0.05;
/// Stored validation RMSE is scaled by this factor to derive `tau`.
pub const RMSE_MULTIPLIER: f64 = 3.0;
pub const DEFAULT_R_MIN: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRule {
    pub tau: f64,
    pub r_min: f64,
}

impl TrustRule {
    /// An explicit `tau` wins; otherwise `3 × validation RMSE` from the
    /// model's calibration; otherwise [`DEFAULT_TAU`].
    pub fn resolve<T: Scalar>(
        tau: Option<f64>,
        r_min: Option<f64>,
        calibration: Option<&Calibration<T>>,
    ) -> TrustRule {
        let tau = tau
            .or_else(|| calibration.map(|c| RMSE_MULTIPLIER * c.val_rmse.as_f64()))
            .filter(|t| t.is_finite())
            .unwrap_or(DEFAULT_TAU);
        TrustRule {
            tau,
            r_min: r_min.unwrap_or(DEFAULT_R_MIN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrustVerdict {
    pub image_id: String,
    pub index: usize,
    pub pred: f64,
    pub conf: f64,
    pub residual: f64,
    pub low_trust: bool,
    pub reason: String,
}

/// Pure decision rule: `(residual, low_trust, reason)`.
pub fn judge<T: Scalar>(
    pred: T,
    conf: T,
    rule: &TrustRule,
    conf_bins: &[BinFidelity<T>],
) -> (T, bool, String) {
    let residual = (pred - conf).abs();
    let mut reasons = Vec::new();
    if residual.as_f64() > rule.tau {
        reasons.push(format!("residual {residual} > tau {}", rule.tau));
    }
    if !conf_bins.is_empty() {
        let bins: Vec<_> = conf_bins.iter().map(|b| b.bin).collect();
        let b = &conf_bins[assign_bin(&bins, conf)];
        if let Some(r2) = b.r2 {
            if r2.as_f64() < rule.r_min {
                reasons.push(format!(
                    "conf bin {} [{}, {}] R2 {r2} < r_min {}",
                    b.bin.index, b.bin.lo, b.bin.hi, rule.r_min
                ));
            }
        }
    }
    let low = !reasons.is_empty();
    let reason = if low { reasons.join("; ") } else { "ok".to_string() };
    (residual, low, reason)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::QuantileBin;

    fn bins() -> Vec<BinFidelity<f64>> {
        vec![
            BinFidelity { bin: QuantileBin { index: 0, lo: 0.25, hi: 0.4 }, r2: Some(0.5) },
            BinFidelity { bin: QuantileBin { index: 1, lo: 0.4, hi: 0.9 }, r2: Some(0.95) },
            BinFidelity { bin: QuantileBin { index: 2, lo: 0.9, hi: 1.0 }, r2: None },
        ]
    }

    #[test]
    fn exact_agreement_is_trusted() {
        let rule = TrustRule { tau: 0.05, r_min: 0.7 };
        let (res, low, reason) = judge(0.6, 0.6, &rule, &bins());
        assert_eq!(res, 0.0);
        assert!(!low);
        assert_eq!(reason, "ok");
    }

    #[test]
    fn zero_tau_flags_any_residual() {
        let rule = TrustRule { tau: 0.0, r_min: 0.0 };
        assert!(judge(0.6 + 1e-12, 0.6, &rule, &[]).1);
        assert!(!judge(0.6, 0.6, &rule, &[]).1);
    }

    #[test]
    fn low_fidelity_bin_flags() {
        let rule = TrustRule { tau: 1.0, r_min: 0.7 };
        let (_, low, reason) = judge(0.3, 0.3, &rule, &bins());
        assert!(low);
        assert!(reason.contains("conf bin 0"));
        // Undefined R² never flags.
        assert!(!judge(0.95, 0.95, &rule, &bins()).1);
    }

    #[test]
    fn tau_resolution() {
        let cal = Calibration { target: "conf".into(), val_rmse: 0.01, conf_bins: vec![] };
        assert_eq!(TrustRule::resolve(Some(0.2), None, Some(&cal)).tau, 0.2);
        assert!((TrustRule::resolve(None, None, Some(&cal)).tau - 0.03).abs() < 1e-15);
        let r = TrustRule::resolve::<f64>(None, None, None);
        assert_eq!((r.tau, r.r_min), (DEFAULT_TAU, DEFAULT_R_MIN));
    }
}
