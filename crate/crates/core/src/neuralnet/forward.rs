use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::RunError;
use crate::scalar::Scalar;

use super::params::{HiddenState, ModelParams};

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Policy logits, baseline value and the next recurrent state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub logits: Array1<T>,
    pub value: T,
    pub hidden: HiddenState<T>,
}

fn check_hidden<T: Scalar>(
    params: &ModelParams<T>,
    hidden: &HiddenState<T>,
) -> Result<(), RunError> {
    let w = params.shape.state_width();
    if hidden.h.len() != w || hidden.c.len() != w {
        return Err(RunError::Shape(format!(
            "hidden state has width {}/{}, model expects {}",
            hidden.h.len(),
            hidden.c.len(),
            w
        )));
    }
    Ok(())
}

/// LSTM cell on a precomputed input projection. Returns `(h, c, [i f g o])`.
fn lstm_cell<T: Scalar>(
    params: &ModelParams<T>,
    input_proj: ArrayView1<T>,
    hidden: &HiddenState<T>,
) -> (Array1<T>, Array1<T>, Array1<T>) {
    let h = params.shape.hidden;
    let mut gates = params.lstm_wh.dot(&hidden.h);
    gates += &input_proj;
    gates += &params.lstm_b;
    for (j, v) in gates.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&j) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut c = Array1::zeros(h);
    let mut hn = Array1::zeros(h);
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * hidden.c[j] + i * g;
        hn[j] = o * c[j].tanh();
    }
    (hn, c, gates)
}

/// One step of the network. Pure: the caller threads the returned hidden state.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    state: &[T],
    prev_reward: T,
    hidden: &HiddenState<T>,
) -> Result<StepOutput<T>, RunError> {
    let shape = params.shape;
    if state.len() != shape.state_len {
        return Err(RunError::Shape(format!(
            "state has length {}, model expects {}",
            state.len(),
            shape.state_len
        )));
    }
    check_hidden(params, hidden)?;
    let x = ArrayView1::from(state);
    let a1 = (params.fc1_w.dot(&x) + &params.fc1_b).mapv(relu);
    let a2 = (params.fc2_w.dot(&a1) + &params.fc2_b).mapv(relu);
    let mut u = Array1::zeros(shape.lstm_input());
    u.slice_mut(s![..shape.trunk]).assign(&a2);
    u[shape.trunk] = prev_reward;
    let (core, next) = if shape.recurrent {
        let proj = params.lstm_wi.dot(&u);
        let (h, c, _) = lstm_cell(params, proj.view(), hidden);
        (h.clone(), HiddenState { h, c })
    } else {
        (u, hidden.clone())
    };
    let logits = params.policy_w.dot(&core) + &params.policy_b;
    let value = params.value_w.row(0).dot(&core) + params.value_b[0];
    Ok(StepOutput {
        logits,
        value,
        hidden: next,
    })
}

/// Activations of an unrolled sequence, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub inputs: Array2<T>,
    pub a1: Array2<T>,
    pub a2: Array2<T>,
    /// `[a2 | reward]` per step.
    pub lstm_in: Array2<T>,
    /// Post-activation gates `[i f g o]` per step.
    pub gates: Array2<T>,
    /// Cell states; row 0 is the initial state.
    pub c: Array2<T>,
    /// Hidden outputs; row 0 is the initial state.
    pub h: Array2<T>,
    pub core: Array2<T>,
    pub logits: Array2<T>,
    pub values: Array1<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_hidden(&self) -> HiddenState<T> {
        let t = self.len();
        HiddenState {
            h: self.h.row(t).to_owned(),
            c: self.c.row(t).to_owned(),
        }
    }
}

/// Runs the network over a whole sequence from `initial`, batching the
/// feed-forward parts across time.
pub fn unroll<T: Scalar>(
    params: &ModelParams<T>,
    states: ArrayView2<T>,
    prev_rewards: &[T],
    initial: &HiddenState<T>,
) -> Result<Tape<T>, RunError> {
    let shape = params.shape;
    let steps = states.nrows();
    if states.ncols() != shape.state_len {
        return Err(RunError::Shape(format!(
            "states have {} columns, model expects {}",
            states.ncols(),
            shape.state_len
        )));
    }
    if prev_rewards.len() != steps {
        return Err(RunError::Shape(format!(
            "{} rewards for {} states",
            prev_rewards.len(),
            steps
        )));
    }
    check_hidden(params, initial)?;

    let a1 = (states.dot(&params.fc1_w.t()) + &params.fc1_b).mapv(relu);
    let a2 = (a1.dot(&params.fc2_w.t()) + &params.fc2_b).mapv(relu);
    let rewards = Array2::from_shape_vec((steps, 1), prev_rewards.to_vec()).expect("column");
    let lstm_in = concatenate![Axis(1), a2, rewards];

    let width = shape.state_width();
    let mut h = Array2::zeros((steps + 1, width));
    let mut c = Array2::zeros((steps + 1, width));
    h.row_mut(0).assign(&initial.h);
    c.row_mut(0).assign(&initial.c);
    let (gates, core) = if shape.recurrent {
        let proj = lstm_in.dot(&params.lstm_wi.t());
        let mut gates = Array2::zeros((steps, 4 * shape.hidden));
        let mut state = initial.clone();
        for t in 0..steps {
            let (hn, cn, g) = lstm_cell(params, proj.row(t), &state);
            gates.row_mut(t).assign(&g);
            h.row_mut(t + 1).assign(&hn);
            c.row_mut(t + 1).assign(&cn);
            state = HiddenState { h: hn, c: cn };
        }
        let core = h.slice(s![1.., ..]).to_owned();
        (gates, core)
    } else {
        (Array2::zeros((steps, 0)), lstm_in.clone())
    };

    let logits = core.dot(&params.policy_w.t()) + &params.policy_b;
    let values = core.dot(&params.value_w.row(0)) + params.value_b[0];
    Ok(Tape {
        inputs: states.to_owned(),
        a1,
        a2,
        lstm_in,
        gates,
        c,
        h,
        core,
        logits,
        values,
    })
}
