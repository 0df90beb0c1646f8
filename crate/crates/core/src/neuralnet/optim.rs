use crate::error::RunError;
use crate::scalar::Scalar;

use super::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            decay: 0.99,
            eps: 1e-5,
        }
    }
}

/// RMSProp without momentum:
/// `acc ← decay·acc + (1−decay)·g²`, `p ← p − lr·g/√(acc+ε)`.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    acc: ModelParams<T>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(config: RmsPropConfig, like: &ModelParams<T>) -> Self {
        Self {
            config,
            acc: ModelParams::zeros(like.shape),
        }
    }

    pub fn accumulators(&self) -> &ModelParams<T> {
        &self.acc
    }

    pub fn step(
        &mut self,
        params: &mut ModelParams<T>,
        grads: &ModelParams<T>,
    ) -> Result<(), RunError> {
        if params.shape != grads.shape || params.shape != self.acc.shape {
            return Err(RunError::Shape(
                "optimizer, parameters and gradients disagree".into(),
            ));
        }
        let lr = T::of(self.config.lr);
        let decay = T::of(self.config.decay);
        let eps = T::of(self.config.eps);
        let keep = T::one() - decay;
        for (((_, p), (_, g)), (_, a)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.acc.tensors_mut())
        {
            for ((p, &g), a) in p.iter_mut().zip(g).zip(a.iter_mut()) {
                *a = decay * *a + keep * g * g;
                *p -= lr * g / (*a + eps).sqrt();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::params::ModelShape;

    fn tiny() -> ModelShape {
        ModelShape {
            state_len: 2,
            trunk: 2,
            hidden: 1,
            actions: 2,
            recurrent: true,
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = ModelParams::<f64>::init(tiny(), 1);
        let before = p.clone();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        opt.step(&mut p, &ModelParams::zeros(tiny())).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = ModelParams::<f64>::zeros(tiny());
        let mut g = ModelParams::<f64>::zeros(tiny());
        g.value_b[0] = 1.0;
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        opt.step(&mut p, &g).unwrap();
        let want = -1e-5 / (0.01f64 + 1e-5).sqrt();
        assert!((p.value_b[0] - want).abs() < 1e-18);
        assert!((opt.accumulators().value_b[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn repeated_gradient_shrinks_steps() {
        let mut p = ModelParams::<f64>::zeros(tiny());
        let mut g = ModelParams::<f64>::zeros(tiny());
        g.value_b[0] = 1.0;
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        opt.step(&mut p, &g).unwrap();
        let d1 = p.value_b[0];
        opt.step(&mut p, &g).unwrap();
        let d2 = p.value_b[0] - d1;
        assert!(d2.abs() < d1.abs());
        assert!(opt.accumulators().value_b[0] >= 0.0);
    }
}
