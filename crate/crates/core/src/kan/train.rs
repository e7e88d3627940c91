use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BinFidelity, Calibration, Gradients, KanModel, DEFAULT_DEGREE, DEFAULT_GRID, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::interchange::{Feature, FeatureVector, Normalizer};
use crate::metrics::{assign_bin, quantile_bins, Fidelity};
use crate::scalar::Scalar;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const CALIBRATION_BINS: usize = 5;

/// Optimizer and architecture settings for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of samples held out for validation, in `(0, 1)`.
    pub val_fraction: f64,
    pub seed: u64,
    /// Weight of the squared-norm penalty on edge coefficients and output
    /// weights.
    pub l2_penalty: f64,
    pub hidden: usize,
    pub grid: usize,
    pub degree: usize,
    /// Recorded in the model's calibration block.
    pub target_name: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-2,
            val_fraction: 0.2,
            seed: 0,
            l2_penalty: 0.0,
            hidden: DEFAULT_HIDDEN,
            grid: DEFAULT_GRID,
            degree: DEFAULT_DEGREE,
            target_name: "conf".to_string(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2 penalty must be non-negative");
        }
        if self.hidden == 0 || self.grid == 0 {
            return bad("hidden width and grid must be at least 1");
        }
        Ok(())
    }
}

/// Per-epoch losses, measured over the full split after each epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory<T> {
    pub train_mse: Vec<T>,
    pub val_mse: Vec<T>,
}

struct Adam<T> {
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr: T::lit(lr),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    fn update(&mut self, model: &mut KanModel<T>, grad: &[T]) {
        self.step += 1;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let eps = T::lit(ADAM_EPS);
        for (i, &g) in grad.iter().enumerate() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let p = model.param(i);
            model.set_param(i, p - self.lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
}

fn split_mse<T: Scalar>(model: &KanModel<T>, bases: &[Vec<Vec<T>>], targets: &[T]) -> T {
    let mut acc = T::zero();
    for (b, &y) in bases.iter().zip(targets) {
        let e = model.output_from_hidden(&model.hidden_from_bases(b)) - y;
        acc = acc + e * e;
    }
    acc / T::count(targets.len().max(1))
}

/// Fits a surrogate to `(features, target)` pairs with mini-batch Adam on the
/// mean squared error. The normalizer is fitted on the training split only.
/// Identical data and config give a bit-identical model.
pub fn train<T: Scalar>(
    data: &[(FeatureVector<T>, T)],
    cfg: &TrainConfig,
) -> Result<(KanModel<T>, TrainHistory<T>)> {
    cfg.validate()?;
    if data.len() < 10 {
        return Err(Error::InvalidConfig(format!(
            "training needs at least 10 samples, got {}",
            data.len()
        )));
    }
    for (i, (fv, y)) in data.iter().enumerate() {
        if !y.is_finite() || !fv.is_finite() {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.val_fraction * data.len() as f64).round() as usize).clamp(1, data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let train_fv: Vec<FeatureVector<T>> = train_idx.iter().map(|&i| data[i].0).collect();
    let normalizer = Normalizer::fit(&train_fv)?;
    let train_y: Vec<T> = train_idx.iter().map(|&i| data[i].1).collect();
    let val_y: Vec<T> = val_idx.iter().map(|&i| data[i].1).collect();
    let bias = crate::scalar::mean(&train_y);

    let mut model = KanModel::init_with_rng(
        cfg.hidden, cfg.grid, cfg.degree, normalizer, cfg.seed, bias, &mut rng,
    )?;
    let train_bases: Vec<Vec<Vec<T>>> =
        train_idx.iter().map(|&i| model.feature_bases(&data[i].0)).collect();
    let val_bases: Vec<Vec<Vec<T>>> =
        val_idx.iter().map(|&i| model.feature_bases(&data[i].0)).collect();

    let n_params = model.n_params();
    let n_penalized = n_params - 1;
    let l2 = T::lit(2.0 * cfg.l2_penalty);
    let mut adam = Adam::new(n_params, cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut perm: Vec<usize> = (0..train_idx.len()).collect();
    let mut grad = Gradients {
        coeffs: vec![T::zero(); model.coeffs.len()],
        out_weights: vec![T::zero(); model.hidden],
        out_bias: T::zero(),
    };

    for epoch in 1..=cfg.epochs {
        perm.shuffle(&mut rng);
        for batch in perm.chunks(cfg.batch_size) {
            grad.coeffs.fill(T::zero());
            grad.out_weights.fill(T::zero());
            grad.out_bias = T::zero();
            let scale = T::lit(2.0) / T::count(batch.len());
            for &s in batch {
                model.accumulate_gradient(&train_bases[s], train_y[s], scale, &mut grad);
            }
            let mut flat = grad.flat();
            if cfg.l2_penalty > 0.0 {
                for (i, g) in flat.iter_mut().enumerate().take(n_penalized) {
                    *g = *g + l2 * model.param(i);
                }
            }
            adam.update(&mut model, &flat);
        }
        let tr = split_mse(&model, &train_bases, &train_y);
        let va = split_mse(&model, &val_bases, &val_y);
        if !tr.is_finite() || !va.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("train mse {tr}, validation mse {va}"),
            });
        }
        history.train_mse.push(tr);
        history.val_mse.push(va);
    }

    let val_rmse = history.val_mse.last().copied().unwrap_or_default().sqrt();
    let calibration = calibrate(&model, data, &cfg.target_name, val_rmse)?;
    model.set_calibration(Some(calibration));
    Ok((model, history))
}

/// Per-bin fidelity over detector-confidence quantile bins.
fn calibrate<T: Scalar>(
    model: &KanModel<T>,
    data: &[(FeatureVector<T>, T)],
    target: &str,
    val_rmse: T,
) -> Result<Calibration<T>> {
    let k = Feature::Conf.index();
    let conf: Vec<T> = data.iter().map(|(fv, _)| fv.0[k]).collect();
    let bins = quantile_bins(&conf, CALIBRATION_BINS);
    let mut preds = vec![Vec::new(); bins.len()];
    let mut targets = vec![Vec::new(); bins.len()];
    for (fv, y) in data {
        let b = assign_bin(&bins, fv.0[k]);
        preds[b].push(model.predict(fv)?);
        targets[b].push(*y);
    }
    let conf_bins = bins
        .into_iter()
        .enumerate()
        .map(|(i, bin)| BinFidelity {
            bin,
            r2: Fidelity::compute(&preds[i], &targets[i]).r2,
        })
        .collect();
    Ok(Calibration {
        target: target.to_string(),
        val_rmse,
        conf_bins,
    })
}
