//! The confidence surrogate: one spline-edge layer feeding a linear output.
//!
//! ```text
//! ĉ(x) = b + Σ_j w_j · h_j,    h_j = Σ_k s_{j,k}(x̃_k)
//! ```
//!
//! `x̃` is the min-max normalized feature vector and every `s_{j,k}` is a
//! B-spline over the shared knot vector. Coefficients are stored flat in
//! `[hidden][feature][basis]` order.

mod persist;
mod train;

pub use persist::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use train::{train, TrainConfig, TrainHistory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{FeatureVector, Normalizer, FEATURE_COUNT, FEATURE_NAMES};
use crate::metrics::QuantileBin;
use crate::scalar::Scalar;
use crate::spline::{dot, KnotVector, SplineEdge};

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_GRID: usize = 5;
pub const DEFAULT_DEGREE: usize = 3;

/// Fidelity of one detector-confidence bin measured when the model was fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinFidelity<T> {
    pub bin: QuantileBin<T>,
    pub r2: Option<T>,
}

/// Training-time summary stored alongside the weights, consumed by trust
/// scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Calibration<T> {
    /// Name of the training target (`conf` unless an external label was used).
    pub target: String,
    pub val_rmse: T,
    pub conf_bins: Vec<BinFidelity<T>>,
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    pub prediction: T,
    pub hidden: Vec<T>,
}

/// MSE gradient with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub coeffs: Vec<T>,
    pub out_weights: Vec<T>,
    pub out_bias: T,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient entries in [`KanModel::param`] order.
    pub fn flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.coeffs.len() + self.out_weights.len() + 1);
        v.extend_from_slice(&self.coeffs);
        v.extend_from_slice(&self.out_weights);
        v.push(self.out_bias);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanModel<T> {
    knots: KnotVector<T>,
    hidden: usize,
    coeffs: Vec<T>,
    out_weights: Vec<T>,
    out_bias: T,
    normalizer: Normalizer<T>,
    feature_names: Vec<String>,
    seed: u64,
    calibration: Option<Calibration<T>>,
}

impl<T: Scalar> KanModel<T> {
    /// A model with every parameter zero.
    pub fn zeros(
        hidden: usize,
        grid: usize,
        degree: usize,
        normalizer: Normalizer<T>,
    ) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
        }
        let knots = KnotVector::new(grid, degree)?;
        let nb = knots.n_basis();
        Ok(KanModel {
            knots,
            hidden,
            coeffs: vec![T::zero(); hidden * FEATURE_COUNT * nb],
            out_weights: vec![T::zero(); hidden],
            out_bias: T::zero(),
            normalizer,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            calibration: None,
        })
    }

    /// Seeded initialization: edge coefficients uniform in `(−0.1, 0.1)`,
    /// output weights uniform in `±1/√hidden`, bias as given.
    pub fn init_random(
        hidden: usize,
        grid: usize,
        degree: usize,
        normalizer: Normalizer<T>,
        seed: u64,
        bias: T,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(hidden, grid, degree, normalizer, seed, bias, &mut rng)
    }

    pub(crate) fn init_with_rng(
        hidden: usize,
        grid: usize,
        degree: usize,
        normalizer: Normalizer<T>,
        seed: u64,
        bias: T,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut m = Self::zeros(hidden, grid, degree, normalizer)?;
        for c in &mut m.coeffs {
            *c = T::lit(rng.gen_range(-0.1..0.1));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in &mut m.out_weights {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        m.out_bias = bias;
        m.seed = seed;
        Ok(m)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        knots: KnotVector<T>,
        hidden: usize,
        coeffs: Vec<T>,
        out_weights: Vec<T>,
        out_bias: T,
        normalizer: Normalizer<T>,
        feature_names: Vec<String>,
        seed: u64,
        calibration: Option<Calibration<T>>,
    ) -> Result<Self> {
        let expected = hidden * FEATURE_COUNT * knots.n_basis();
        if coeffs.len() != expected {
            return Err(Error::CoefficientCount {
                expected,
                got: coeffs.len(),
            });
        }
        if out_weights.len() != hidden {
            return Err(Error::CoefficientCount {
                expected: hidden,
                got: out_weights.len(),
            });
        }
        Ok(KanModel {
            knots,
            hidden,
            coeffs,
            out_weights,
            out_bias,
            normalizer,
            feature_names,
            seed,
            calibration,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn knots(&self) -> &KnotVector<T> {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.n_basis()
    }

    pub fn normalizer(&self) -> &Normalizer<T> {
        &self.normalizer
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn calibration(&self) -> Option<&Calibration<T>> {
        self.calibration.as_ref()
    }

    pub fn set_calibration(&mut self, c: Option<Calibration<T>>) {
        self.calibration = c;
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    fn edge_offset(&self, j: usize, k: usize) -> usize {
        assert!(j < self.hidden && k < FEATURE_COUNT, "edge ({j},{k}) out of range");
        (j * FEATURE_COUNT + k) * self.n_basis()
    }

    pub fn edge_coeffs(&self, j: usize, k: usize) -> &[T] {
        let o = self.edge_offset(j, k);
        &self.coeffs[o..o + self.n_basis()]
    }

    pub fn edge_coeffs_mut(&mut self, j: usize, k: usize) -> &mut [T] {
        let o = self.edge_offset(j, k);
        let nb = self.n_basis();
        &mut self.coeffs[o..o + nb]
    }

    /// Owned copy of edge `(j, k)` as a standalone spline.
    pub fn edge(&self, j: usize, k: usize) -> SplineEdge<T> {
        SplineEdge::new(self.knots.clone(), self.edge_coeffs(j, k).to_vec())
            .expect("edge coefficient count follows the knot vector")
    }

    pub fn out_weights(&self) -> &[T] {
        &self.out_weights
    }

    pub fn out_weights_mut(&mut self) -> &mut [T] {
        &mut self.out_weights
    }

    pub fn out_bias(&self) -> T {
        self.out_bias
    }

    pub fn set_out_bias(&mut self, b: T) {
        self.out_bias = b;
    }

    /// Total trainable parameter count: edge coefficients, output weights,
    /// bias.
    pub fn n_params(&self) -> usize {
        self.coeffs.len() + self.hidden + 1
    }

    /// Parameter `i` in flat order (coefficients, output weights, bias).
    pub fn param(&self, i: usize) -> T {
        let nc = self.coeffs.len();
        if i < nc {
            self.coeffs[i]
        } else if i < nc + self.hidden {
            self.out_weights[i - nc]
        } else {
            assert_eq!(i, nc + self.hidden, "parameter index out of range");
            self.out_bias
        }
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        let nc = self.coeffs.len();
        if i < nc {
            self.coeffs[i] = v;
        } else if i < nc + self.hidden {
            self.out_weights[i - nc] = v;
        } else {
            assert_eq!(i, nc + self.hidden, "parameter index out of range");
            self.out_bias = v;
        }
    }

    /// Basis vectors of the normalized features, one per feature.
    pub(crate) fn feature_bases(&self, fv: &FeatureVector<T>) -> Vec<Vec<T>> {
        (0..FEATURE_COUNT)
            .map(|k| self.knots.basis(self.normalizer.normalize_value(k, fv.0[k])))
            .collect()
    }

    pub(crate) fn hidden_from_bases(&self, bases: &[Vec<T>]) -> Vec<T> {
        let nb = self.n_basis();
        (0..self.hidden)
            .map(|j| {
                let row = &self.coeffs[j * FEATURE_COUNT * nb..(j + 1) * FEATURE_COUNT * nb];
                bases
                    .iter()
                    .enumerate()
                    .map(|(k, b)| dot(&row[k * nb..(k + 1) * nb], b))
                    .sum()
            })
            .collect()
    }

    pub(crate) fn output_from_hidden(&self, hidden: &[T]) -> T {
        self.out_bias + dot(&self.out_weights, hidden)
    }

    fn check_finite(fv: &FeatureVector<T>) -> Result<()> {
        if fv.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("feature vector {:?}", fv.0)))
        }
    }

    /// Prediction and hidden activations for one raw feature vector. The
    /// prediction is not clipped.
    pub fn forward(&self, fv: &FeatureVector<T>) -> Result<Forward<T>> {
        Self::check_finite(fv)?;
        let hidden = self.hidden_from_bases(&self.feature_bases(fv));
        Ok(Forward {
            prediction: self.output_from_hidden(&hidden),
            hidden,
        })
    }

    pub fn predict(&self, fv: &FeatureVector<T>) -> Result<T> {
        self.forward(fv).map(|f| f.prediction)
    }

    /// Spline output `s_{j,k}` at raw feature value `v`.
    pub fn edge_value(&self, j: usize, k: usize, v: T) -> T {
        let t = self.normalizer.normalize_value(k, v);
        dot(self.edge_coeffs(j, k), &self.knots.basis(t))
    }

    /// Everything feature `k` contributes to the prediction at raw value `v`:
    /// `Σ_j w_j · s_{j,k}(x̃_k)`.
    pub fn feature_contribution(&self, k: usize, v: T) -> T {
        let basis = self.knots.basis(self.normalizer.normalize_value(k, v));
        (0..self.hidden)
            .map(|j| self.out_weights[j] * dot(self.edge_coeffs(j, k), &basis))
            .sum()
    }

    /// `∂ĉ/∂x_k` in raw feature units for every feature, using exact spline
    /// derivatives and the normalizer's chain factor.
    pub fn input_gradient(&self, fv: &FeatureVector<T>) -> Result<[T; FEATURE_COUNT]> {
        Self::check_finite(fv)?;
        let mut out = [T::zero(); FEATURE_COUNT];
        if self.knots.degree() == 0 {
            return Ok(out);
        }
        let mut dbasis = Vec::with_capacity(self.n_basis());
        for (k, o) in out.iter_mut().enumerate() {
            let chain = self.normalizer.chain_factor(k, fv.0[k]);
            if chain == T::zero() {
                continue;
            }
            let t = self.normalizer.normalize_value(k, fv.0[k]);
            self.knots.basis_derivative_into(t, &mut dbasis)?;
            let d: T = (0..self.hidden)
                .map(|j| self.out_weights[j] * dot(self.edge_coeffs(j, k), &dbasis))
                .sum();
            *o = d * chain;
        }
        Ok(out)
    }

    /// Mean squared error over `batch`.
    pub fn mse(&self, batch: &[(FeatureVector<T>, T)]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("mse of an empty batch"));
        }
        let mut acc = T::zero();
        for (fv, y) in batch {
            let e = self.predict(fv)? - *y;
            acc = acc + e * e;
        }
        Ok(acc / T::count(batch.len()))
    }

    /// Exact gradient of the batch MSE.
    pub fn gradients(&self, batch: &[(FeatureVector<T>, T)]) -> Result<Gradients<T>> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset("gradient of an empty batch"));
        }
        let mut g = Gradients {
            coeffs: vec![T::zero(); self.coeffs.len()],
            out_weights: vec![T::zero(); self.hidden],
            out_bias: T::zero(),
        };
        let scale = T::lit(2.0) / T::count(batch.len());
        for (fv, y) in batch {
            Self::check_finite(fv)?;
            let bases = self.feature_bases(fv);
            self.accumulate_gradient(&bases, *y, scale, &mut g);
        }
        Ok(g)
    }

    /// Adds `scale·(ŷ − y)·∂ŷ/∂θ` for one sample into `g`; returns `ŷ − y`.
    pub(crate) fn accumulate_gradient(
        &self,
        bases: &[Vec<T>],
        target: T,
        scale: T,
        g: &mut Gradients<T>,
    ) -> T {
        let hidden = self.hidden_from_bases(bases);
        let err = self.output_from_hidden(&hidden) - target;
        let d_out = scale * err;
        g.out_bias = g.out_bias + d_out;
        let nb = self.n_basis();
        for j in 0..self.hidden {
            g.out_weights[j] = g.out_weights[j] + d_out * hidden[j];
            let d_hidden = d_out * self.out_weights[j];
            if d_hidden == T::zero() {
                continue;
            }
            for (k, basis) in bases.iter().enumerate() {
                let o = (j * FEATURE_COUNT + k) * nb;
                for (gc, &b) in g.coeffs[o..o + nb].iter_mut().zip(basis) {
                    *gc = *gc + d_hidden * b;
                }
            }
        }
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(seed: u64) -> FeatureVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureVector([
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.0..1.0),
            f64::from(rng.gen_range(0u32..80)),
            rng.gen_range(0.0..1.0),
        ])
    }

    fn wide_normalizer() -> Normalizer<f64> {
        let mut n = Normalizer::unit();
        n.max[5] = 79.0;
        n
    }

    /// Independent double sum over (j, k) with each edge evaluated through
    /// the standalone spline type.
    fn brute_force(m: &KanModel<f64>, fv: &FeatureVector<f64>) -> f64 {
        let mut acc = m.out_bias();
        for j in 0..m.hidden() {
            let mut h = 0.0;
            for k in 0..FEATURE_COUNT {
                let t = m.normalizer().normalize_value(k, fv.0[k]);
                h += m.edge(j, k).eval(t);
            }
            acc += m.out_weights()[j] * h;
        }
        acc
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = KanModel::zeros(16, 5, 3, wide_normalizer()).unwrap();
        let f = m.forward(&sample(1)).unwrap();
        assert_eq!(f.prediction, 0.0);
        assert!(f.hidden.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn constant_edges_sum_per_feature() {
        let mut m = KanModel::zeros(16, 5, 3, wide_normalizer()).unwrap();
        let c = 0.37;
        for k in 0..FEATURE_COUNT {
            m.edge_coeffs_mut(4, k).fill(c);
        }
        m.out_weights_mut()[4] = 1.0;
        m.set_out_bias(0.25);
        for s in 0..10 {
            assert_relative_eq!(m.predict(&sample(s)).unwrap(), 0.25 + 7.0 * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_brute_force() {
        for seed in 0..5 {
            let m = KanModel::init_random(16, 5, 3, wide_normalizer(), seed, 0.3).unwrap();
            for s in 0..20 {
                let fv = sample(100 + s);
                assert!((m.predict(&fv).unwrap() - brute_force(&m, &fv)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let m = KanModel::zeros(4, 3, 3, Normalizer::unit()).unwrap();
        let fv = sample(0).with(2, f64::NAN);
        assert!(matches!(m.forward(&fv), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_output_weights_block_edge_gradients() {
        let mut m = KanModel::init_random(16, 5, 3, wide_normalizer(), 3, 0.0).unwrap();
        m.out_weights_mut().fill(0.0);
        let batch: Vec<_> = (0..8).map(|s| (sample(s), 0.5)).collect();
        let g = m.gradients(&batch).unwrap();
        assert!(g.coeffs.iter().all(|&v| v == 0.0));
        assert!(g.out_bias != 0.0);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let m = KanModel::init_random(16, 5, 3, wide_normalizer(), 9, 0.1).unwrap();
        let batch: Vec<_> = (0..8)
            .map(|s| {
                let fv = sample(s);
                (fv, m.predict(&fv).unwrap())
            })
            .collect();
        let g = m.gradients(&batch).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = KanModel::init_random(3, 3, 3, wide_normalizer(), 11, 0.2).unwrap();
        let batch: Vec<_> = (0..12).map(|s| (sample(s), 0.1 * s as f64)).collect();
        let g = m.gradients(&batch).unwrap().flat();
        let h = 1e-6;
        for i in 0..m.n_params() {
            let mut plus = m.clone();
            plus.set_param(i, m.param(i) + h);
            let mut minus = m.clone();
            minus.set_param(i, m.param(i) - h);
            let fd = (plus.mse(&batch).unwrap() - minus.mse(&batch).unwrap()) / (2.0 * h);
            // The floor sits well above the rounding noise of the difference
            // quotient (about eps·mse/h ≈ 1e-11).
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-5, "param {i}: analytic {} fd {fd}", g[i]);
        }
    }

    #[test]
    fn additivity_through_feature_column() {
        let m = KanModel::init_random(16, 5, 3, wide_normalizer(), 21, 0.0).unwrap();
        for k in 0..FEATURE_COUNT {
            let mut zeroed = m.clone();
            for j in 0..16 {
                zeroed.edge_coeffs_mut(j, k).fill(0.0);
            }
            for s in 0..5 {
                let fv = sample(50 + s);
                let diff = m.predict(&fv).unwrap() - zeroed.predict(&fv).unwrap();
                assert!((diff - m.feature_contribution(k, fv.0[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let m = KanModel::init_random(16, 5, 3, wide_normalizer(), 5, 0.0).unwrap();
        let fv = FeatureVector([0.31, 0.62, 0.27, 0.44, 0.71, 23.5, 0.12]);
        let g = m.input_gradient(&fv).unwrap();
        for k in 0..FEATURE_COUNT {
            let h = 1e-6 * (m.normalizer().max[k] - m.normalizer().min[k]);
            let fd = (m.predict(&fv.with(k, fv.0[k] + h)).unwrap()
                - m.predict(&fv.with(k, fv.0[k] - h)).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_precision_forward() {
        let n = Normalizer::<f32>::unit();
        let m = KanModel::<f32>::init_random(16, 5, 3, n, 1, 0.5).unwrap();
        let p = m.predict(&FeatureVector([0.5f32; 7])).unwrap();
        assert!(p.is_finite());
    }
}
