use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::RunError;
use crate::scalar::Scalar;

pub const DEFAULT_TRUNK: usize = 512;
pub const DEFAULT_HIDDEN: usize = 256;

/// Layer sizes of the policy/value network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub state_len: usize,
    pub trunk: usize,
    pub hidden: usize,
    pub actions: usize,
    /// `false` replaces the LSTM with a pass-through of its input.
    pub recurrent: bool,
}

impl ModelShape {
    pub fn new(state_len: usize, actions: usize) -> Self {
        Self {
            state_len,
            trunk: DEFAULT_TRUNK,
            hidden: DEFAULT_HIDDEN,
            actions,
            recurrent: true,
        }
    }

    /// Trunk features plus the reward.
    pub fn lstm_input(&self) -> usize {
        self.trunk + 1
    }

    /// Width of the representation fed to both heads.
    pub fn core_dim(&self) -> usize {
        if self.recurrent {
            self.hidden
        } else {
            self.lstm_input()
        }
    }

    /// Hidden width actually carried between steps (0 without the LSTM).
    pub fn state_width(&self) -> usize {
        if self.recurrent {
            self.hidden
        } else {
            0
        }
    }
}

/// LSTM `(h, c)`; zero-length when the model is not recurrent.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    pub h: Array1<T>,
    pub c: Array1<T>,
}

impl<T: Scalar> HiddenState<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            h: Array1::zeros(width),
            c: Array1::zeros(width),
        }
    }

    pub fn for_shape(shape: &ModelShape) -> Self {
        Self::zeros(shape.state_width())
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.c.iter()).all(|v| v.is_finite())
    }
}

/// All trainable tensors. Gate blocks of the LSTM matrices are stacked as
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub shape: ModelShape,
    pub fc1_w: Array2<T>,
    pub fc1_b: Array1<T>,
    pub fc2_w: Array2<T>,
    pub fc2_b: Array1<T>,
    pub lstm_wi: Array2<T>,
    pub lstm_wh: Array2<T>,
    pub lstm_b: Array1<T>,
    pub policy_w: Array2<T>,
    pub policy_b: Array1<T>,
    pub value_w: Array2<T>,
    pub value_b: Array1<T>,
}

pub const TENSOR_NAMES: [&str; 11] = [
    "fc1_w", "fc1_b", "fc2_w", "fc2_b", "lstm_wi", "lstm_wh", "lstm_b", "policy_w", "policy_b",
    "value_w", "value_b",
];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(shape: ModelShape) -> Self {
        let g = if shape.recurrent { 4 * shape.hidden } else { 0 };
        let (wi_cols, wh_cols) = if shape.recurrent {
            (shape.lstm_input(), shape.hidden)
        } else {
            (0, 0)
        };
        Self {
            shape,
            fc1_w: Array2::zeros((shape.trunk, shape.state_len)),
            fc1_b: Array1::zeros(shape.trunk),
            fc2_w: Array2::zeros((shape.trunk, shape.trunk)),
            fc2_b: Array1::zeros(shape.trunk),
            lstm_wi: Array2::zeros((g, wi_cols)),
            lstm_wh: Array2::zeros((g, wh_cols)),
            lstm_b: Array1::zeros(g),
            policy_w: Array2::zeros((shape.actions, shape.core_dim())),
            policy_b: Array1::zeros(shape.actions),
            value_w: Array2::zeros((1, shape.core_dim())),
            value_b: Array1::zeros(1),
        }
    }

    /// Uniform(±1/√fan_in) weights and biases, forget-gate bias shifted by +1.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(shape);
        let fan_lstm = (shape.lstm_input() + shape.hidden) as f64;
        let fans = [
            shape.state_len as f64,
            shape.state_len as f64,
            shape.trunk as f64,
            shape.trunk as f64,
            fan_lstm,
            fan_lstm,
            fan_lstm,
            shape.core_dim() as f64,
            shape.core_dim() as f64,
            shape.core_dim() as f64,
            shape.core_dim() as f64,
        ];
        for ((_, t), fan) in p.tensors_mut().into_iter().zip(fans) {
            let bound = 1.0 / fan.max(1.0).sqrt();
            for v in t.iter_mut() {
                *v = T::of(rng.gen_range(-bound..bound));
            }
        }
        if shape.recurrent {
            let h = shape.hidden;
            for v in p.lstm_b.slice_mut(ndarray::s![h..2 * h]).iter_mut() {
                *v += T::one();
            }
        }
        p
    }

    pub fn tensors(&self) -> [(&'static str, &[T]); 11] {
        fn s<T>(a: Option<&[T]>) -> &[T] {
            a.expect("parameters are contiguous")
        }
        [
            ("fc1_w", s(self.fc1_w.as_slice())),
            ("fc1_b", s(self.fc1_b.as_slice())),
            ("fc2_w", s(self.fc2_w.as_slice())),
            ("fc2_b", s(self.fc2_b.as_slice())),
            ("lstm_wi", s(self.lstm_wi.as_slice())),
            ("lstm_wh", s(self.lstm_wh.as_slice())),
            ("lstm_b", s(self.lstm_b.as_slice())),
            ("policy_w", s(self.policy_w.as_slice())),
            ("policy_b", s(self.policy_b.as_slice())),
            ("value_w", s(self.value_w.as_slice())),
            ("value_b", s(self.value_b.as_slice())),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [T]); 11] {
        fn s<T>(a: Option<&mut [T]>) -> &mut [T] {
            a.expect("parameters are contiguous")
        }
        [
            ("fc1_w", s(self.fc1_w.as_slice_mut())),
            ("fc1_b", s(self.fc1_b.as_slice_mut())),
            ("fc2_w", s(self.fc2_w.as_slice_mut())),
            ("fc2_b", s(self.fc2_b.as_slice_mut())),
            ("lstm_wi", s(self.lstm_wi.as_slice_mut())),
            ("lstm_wh", s(self.lstm_wh.as_slice_mut())),
            ("lstm_b", s(self.lstm_b.as_slice_mut())),
            ("policy_w", s(self.policy_w.as_slice_mut())),
            ("policy_b", s(self.policy_b.as_slice_mut())),
            ("value_w", s(self.value_w.as_slice_mut())),
            ("value_b", s(self.value_b.as_slice_mut())),
        ]
    }

    /// `(rows, cols)` of each tensor in [`TENSOR_NAMES`] order; biases have one row.
    pub fn tensor_dims(&self) -> [(usize, usize); 11] {
        let m = |a: &Array2<T>| a.dim();
        let v = |a: &Array1<T>| (1, a.len());
        [
            m(&self.fc1_w),
            v(&self.fc1_b),
            m(&self.fc2_w),
            v(&self.fc2_b),
            m(&self.lstm_wi),
            m(&self.lstm_wh),
            v(&self.lstm_b),
            m(&self.policy_w),
            v(&self.policy_b),
            m(&self.value_w),
            v(&self.value_b),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Errors naming every tensor that holds a NaN or infinity.
    pub fn check_finite(&self, what: &str) -> Result<(), RunError> {
        let bad: Vec<&str> = self
            .tensors()
            .into_iter()
            .filter(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RunError::NonFinite(format!("{what} {}", bad.join(", "))))
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.shape);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.f64());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_config() {
        let p = ModelParams::<f64>::init(ModelShape::new(220, 5), 1);
        assert_eq!(p.fc1_w.dim(), (512, 220));
        assert_eq!(p.lstm_wi.dim(), (1024, 513));
        assert_eq!(p.lstm_wh.dim(), (1024, 256));
        assert_eq!(p.policy_w.dim(), (5, 256));
        assert_eq!(p.value_w.dim(), (1, 256));
        p.check_finite("init").unwrap();
    }

    #[test]
    fn init_bounds_and_forget_bias() {
        let shape = ModelShape {
            state_len: 12,
            trunk: 16,
            hidden: 8,
            actions: 5,
            recurrent: true,
        };
        let p = ModelParams::<f64>::init(shape, 9);
        let b = 1.0 / 12f64.sqrt();
        assert!(p.fc1_w.iter().all(|v| v.abs() <= b));
        let bl = 1.0 / ((17 + 8) as f64).sqrt();
        for (i, v) in p.lstm_b.iter().enumerate() {
            if (8..16).contains(&i) {
                assert!((v - 1.0).abs() <= bl);
            } else {
                assert!(v.abs() <= bl);
            }
        }
    }

    #[test]
    fn feedforward_variant_has_no_recurrent_tensors() {
        let mut shape = ModelShape::new(100, 5);
        shape.recurrent = false;
        let p = ModelParams::<f32>::init(shape, 2);
        assert_eq!(p.lstm_wi.len(), 0);
        assert_eq!(p.policy_w.dim(), (5, 513));
        assert_eq!(HiddenState::<f32>::for_shape(&shape).h.len(), 0);
    }

    #[test]
    fn same_seed_same_weights() {
        let s = ModelShape::new(30, 3);
        assert_eq!(
            ModelParams::<f64>::init(s, 4),
            ModelParams::<f64>::init(s, 4)
        );
        assert_ne!(
            ModelParams::<f64>::init(s, 4),
            ModelParams::<f64>::init(s, 5)
        );
    }
}
