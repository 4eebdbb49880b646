//! Boosted cross-entropy: per-pixel cross-entropy weighted by
//! `(1 - p_t)^alpha`, so poorly predicted pixels dominate the objective.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostedCEConfig {
    pub alpha: f64,
    /// Probabilities are clamped to `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
}

impl Default for BoostedCEConfig {
    fn default() -> Self {
        BoostedCEConfig { alpha: 2.0, epsilon: 1e-7 }
    }
}

impl BoostedCEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Loss of a single pixel given the clamped probability of its true class.
pub fn pixel_loss(p_t: f64, alpha: f64) -> f64 {
    -(1.0 - p_t).powf(alpha) * p_t.ln()
}

/// Mean boosted cross-entropy over all pixels and its gradient with respect
/// to the logits that produced `pred` through a sigmoid.
///
/// With `z_t = ±z` for target 1/0, `d loss_i / d z_t = (1 - p_t)^alpha ·
/// (alpha · p_t · ln p_t - (1 - p_t))`. The gradient is evaluated at the
/// clamped probability, so saturated wrong pixels still receive a gradient.
pub fn boosted_ce<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, cfg: &BoostedCEConfig) -> Result<(f64, Tensor<T>)> {
    target.expect_shape("boosted_ce", pred.shape())?;
    let n = pred.data().len() as f64;
    let (lo, hi) = (cfg.epsilon, 1.0 - cfg.epsilon);
    let alpha = cfg.alpha;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.data().len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let t = t.as_f64();
        let positive = if t == 1.0 {
            true
        } else if t == 0.0 {
            false
        } else {
            return Err(Error::invalid(format!("boosted_ce target must be binary, found {t}")));
        };
        let p = p.as_f64();
        let p_t = if positive { p } else { 1.0 - p }.clamp(lo, hi);
        total += pixel_loss(p_t, alpha);
        let q = 1.0 - p_t;
        let dz_t = q.powf(alpha) * (alpha * p_t * p_t.ln() - q);
        grad.push(T::of(if positive { dz_t } else { -dz_t } / n));
    }
    Ok((total / n, Tensor::from_vec(pred.shape(), grad)?))
}
