use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::RunError;
use crate::scalar::Scalar;

use super::forward::Tape;
use super::params::ModelParams;

/// Backpropagates `dL/dlogits` (T × |A|) and `dL/dvalue` (T) through an
/// unrolled sequence and accumulates parameter gradients into `grads`.
///
/// Full BPTT from the last step back to the initial state; the gradient with
/// respect to the initial hidden state is discarded.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    tape: &Tape<T>,
    dlogits: ArrayView2<T>,
    dvalues: ArrayView1<T>,
    grads: &mut ModelParams<T>,
) -> Result<(), RunError> {
    let shape = params.shape;
    let steps = tape.len();
    if dlogits.dim() != (steps, shape.actions) || dvalues.len() != steps {
        return Err(RunError::Shape(format!(
            "output gradients {:?}/{} for {} steps of {} actions",
            dlogits.dim(),
            dvalues.len(),
            steps,
            shape.actions
        )));
    }
    if grads.shape != shape {
        return Err(RunError::Shape(
            "gradient buffer built for another model".into(),
        ));
    }

    // heads
    grads.policy_w += &dlogits.t().dot(&tape.core);
    grads.policy_b += &dlogits.sum_axis(Axis(0));
    {
        let mut row = grads.value_w.row_mut(0);
        row += &tape.core.t().dot(&dvalues);
    }
    grads.value_b[0] += dvalues.sum();
    let mut dcore = dlogits.dot(&params.policy_w);
    for (mut r, &dv) in dcore.rows_mut().into_iter().zip(dvalues.iter()) {
        r.scaled_add(dv, &params.value_w.row(0));
    }

    let dlstm_in = if shape.recurrent {
        let h = shape.hidden;
        let mut dgates = Array2::<T>::zeros((steps, 4 * h));
        let mut dh_next = Array1::<T>::zeros(h);
        let mut dc_next = Array1::<T>::zeros(h);
        for t in (0..steps).rev() {
            let g = tape.gates.row(t);
            let c_prev = tape.c.row(t);
            let c_t = tape.c.row(t + 1);
            let dh = &dcore.row(t) + &dh_next;
            let mut dg_row = dgates.row_mut(t);
            for j in 0..h {
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = c_t[j].tanh();
                let d_o = dh[j] * tc;
                let dc = dh[j] * o * (T::one() - tc * tc) + dc_next[j];
                let d_i = dc * gg;
                let d_g = dc * i;
                let d_f = dc * c_prev[j];
                dc_next[j] = dc * f;
                dg_row[j] = d_i * i * (T::one() - i);
                dg_row[h + j] = d_f * f * (T::one() - f);
                dg_row[2 * h + j] = d_g * (T::one() - gg * gg);
                dg_row[3 * h + j] = d_o * o * (T::one() - o);
            }
            dh_next = params.lstm_wh.t().dot(&dgates.row(t));
        }
        let h_prev = tape.h.slice(s![..steps, ..]);
        grads.lstm_wh += &dgates.t().dot(&h_prev);
        grads.lstm_wi += &dgates.t().dot(&tape.lstm_in);
        grads.lstm_b += &dgates.sum_axis(Axis(0));
        dgates.dot(&params.lstm_wi)
    } else {
        dcore
    };

    let da2 = dlstm_in.slice(s![.., ..shape.trunk]);
    let dz2 = relu_mask(da2, &tape.a2);
    grads.fc2_w += &dz2.t().dot(&tape.a1);
    grads.fc2_b += &dz2.sum_axis(Axis(0));
    let da1 = dz2.dot(&params.fc2_w);
    let dz1 = relu_mask(da1.view(), &tape.a1);
    grads.fc1_w += &dz1.t().dot(&tape.inputs);
    grads.fc1_b += &dz1.sum_axis(Axis(0));

    grads.check_finite("gradient of")
}

fn relu_mask<T: Scalar>(upstream: ArrayView2<T>, activation: &Array2<T>) -> Array2<T> {
    let mut out = upstream.to_owned();
    out.zip_mut_with(activation, |d, &a| {
        if a <= T::zero() {
            *d = T::zero();
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::forward::unroll;
    use crate::neuralnet::params::{HiddenState, ModelShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let shape = ModelShape {
            state_len: 5,
            trunk: 6,
            hidden: 3,
            actions: 2,
            recurrent: true,
        };
        let p = ModelParams::<f64>::init(shape, 1);
        let xs = Array2::from_elem((4, 5), 0.3);
        let tape = unroll(&p, xs.view(), &[0.0; 4], &HiddenState::for_shape(&shape)).unwrap();
        let mut g = ModelParams::zeros(shape);
        backward(
            &p,
            &tape,
            Array2::zeros((4, 2)).view(),
            Array1::zeros(4).view(),
            &mut g,
        )
        .unwrap();
        assert_eq!(g, ModelParams::zeros(shape));
    }

    #[test]
    fn linear_value_head_matches_least_squares_gradient() {
        // single step, L = 0.5 (v - y)^2 with v = w·core + b: dL/dw = (v - y) core, dL/db = v - y
        let shape = ModelShape {
            state_len: 4,
            trunk: 5,
            hidden: 3,
            actions: 2,
            recurrent: true,
        };
        let p = ModelParams::<f64>::init(shape, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = Array2::from_shape_fn((1, 4), |_| rng.gen_range(-1.0..1.0));
        let tape = unroll(&p, xs.view(), &[0.5], &HiddenState::for_shape(&shape)).unwrap();
        let y = 0.7;
        let resid = tape.values[0] - y;
        let mut g = ModelParams::zeros(shape);
        backward(
            &p,
            &tape,
            Array2::zeros((1, 2)).view(),
            Array1::from_elem(1, resid).view(),
            &mut g,
        )
        .unwrap();
        for (gw, c) in g.value_w.row(0).iter().zip(tape.core.row(0)) {
            assert!((gw - resid * c).abs() < 1e-15);
        }
        assert!((g.value_b[0] - resid).abs() < 1e-15);
        assert!(g.policy_w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_gradient_names_the_tensor() {
        let shape = ModelShape {
            state_len: 3,
            trunk: 2,
            hidden: 2,
            actions: 2,
            recurrent: true,
        };
        let p = ModelParams::<f64>::init(shape, 1);
        let xs = Array2::from_elem((2, 3), 1.0);
        let tape = unroll(&p, xs.view(), &[0.0; 2], &HiddenState::for_shape(&shape)).unwrap();
        let mut g = ModelParams::zeros(shape);
        let mut dl = Array2::zeros((2, 2));
        dl[[0, 0]] = f64::NAN;
        let err = backward(&p, &tape, dl.view(), Array1::zeros(2).view(), &mut g).unwrap_err();
        assert!(err.to_string().contains("policy_w"), "{err}");
    }
}
