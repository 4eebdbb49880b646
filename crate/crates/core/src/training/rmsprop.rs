use crate::error::{Error, Result};
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RMSPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RMSPropConfig {
    fn default() -> Self {
        RMSPropConfig { learning_rate: 1e-3, decay: 0.9, eps: 1e-8 }
    }
}

impl RMSPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1), got {}", self.decay)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// RMSprop with one mean-square accumulator per parameter:
/// `ms ← decay·ms + (1−decay)·g²`, `θ ← θ − lr·g/√(ms + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RMSPropState {
    pub config: RMSPropConfig,
    pub mean_square: Vec<Vec<f64>>,
}

impl RMSPropState {
    /// Accumulators shaped after `params`, zero-initialized.
    pub fn new<T: Real>(config: RMSPropConfig, params: &[&[T]]) -> Result<Self> {
        config.validate()?;
        Ok(RMSPropState { config, mean_square: params.iter().map(|p| vec![0.0; p.len()]).collect() })
    }

    pub fn step<T: Real>(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.mean_square.len() || grads.len() != self.mean_square.len() {
            return Err(Error::invalid(format!(
                "rmsprop: {} parameter tensors, {} gradients, {} accumulators",
                params.len(),
                grads.len(),
                self.mean_square.len()
            )));
        }
        for (i, ((p, g), ms)) in params.iter().zip(grads).zip(&self.mean_square).enumerate() {
            if p.len() != g.len() || p.len() != ms.len() {
                return Err(Error::invalid(format!(
                    "rmsprop tensor {i}: {} parameters, {} gradients, {} accumulators",
                    p.len(),
                    g.len(),
                    ms.len()
                )));
            }
        }
        let RMSPropConfig { learning_rate: lr, decay, eps } = self.config;
        for ((p, g), ms) in params.iter_mut().zip(grads).zip(self.mean_square.iter_mut()) {
            for ((w, &gv), m) in p.iter_mut().zip(g).zip(ms.iter_mut()) {
                let gv = gv.as_f64();
                *m = decay * *m + (1.0 - decay) * gv * gv;
                *w = T::of(w.as_f64() - lr * gv / (*m + eps).sqrt());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(grad: f64, steps: usize) -> (f64, RMSPropState) {
        let mut p = vec![0.0f64];
        let mut st = RMSPropState::new(RMSPropConfig::default(), &[&p[..]]).unwrap();
        let mut last = 0.0;
        for _ in 0..steps {
            let before = p[0];
            st.step(&mut [&mut p[..]], &[vec![grad]]).unwrap();
            last = p[0] - before;
        }
        (last, st)
    }

    #[test]
    fn first_step_from_zero_state() {
        let (delta, st) = run(1.0, 1);
        // independent scalar evaluation of the recurrence
        let ms = 0.9 * 0.0 + 0.1 * 1.0;
        let expected = -1e-3 * 1.0 / (ms + 1e-8f64).sqrt();
        assert!((delta - expected).abs() < 1e-15);
        assert!((delta + 3.1623e-3).abs() < 1e-7);
        assert!((st.mean_square[0][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_accumulator() {
        let mut p = vec![1.5f32, -2.0];
        let mut st = RMSPropState::new(RMSPropConfig::default(), &[&p[..]]).unwrap();
        st.mean_square[0] = vec![0.5, 0.2];
        st.step(&mut [&mut p[..]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert!((st.mean_square[0][0] - 0.45).abs() < 1e-15);
        assert!((st.mean_square[0][1] - 0.18).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_approaches_learning_rate() {
        for g in [0.01, 1.0, 250.0] {
            let (delta, st) = run(g, 400);
            assert!((delta.abs() - 1e-3).abs() < 1e-6, "g={g} delta={delta}");
            assert!((st.mean_square[0][0] - g * g).abs() < 1e-9 * g * g.max(1.0));
        }
    }

    #[test]
    fn scaling_gradients_keeps_saturated_direction() {
        let (a, _) = run(0.3, 400);
        let (b, _) = run(30.0, 400);
        assert_eq!(a.signum(), b.signum());
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![0.0f32; 3];
        let mut st = RMSPropState::new(RMSPropConfig::default(), &[&p[..]]).unwrap();
        assert!(st.step(&mut [&mut p[..]], &[vec![0.0; 2]]).is_err());
        assert!(st.step(&mut [&mut p[..]], &[]).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = RMSPropConfig { decay: 1.0, ..Default::default() };
        assert!(RMSPropState::new::<f32>(cfg, &[]).is_err());
    }
}
