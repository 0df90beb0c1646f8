use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::scalar::Scalar;

pub fn log_softmax<T: Scalar>(logits: ArrayView1<T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.mapv(|l| l - lse)
}

pub fn softmax<T: Scalar>(logits: ArrayView1<T>) -> Array1<T> {
    log_softmax(logits).mapv(T::exp)
}

pub fn entropy<T: Scalar>(logits: ArrayView1<T>) -> T {
    let lp = log_softmax(logits);
    -lp.iter().map(|&l| l.exp() * l).sum::<T>()
}

/// Samples from `softmax(logits)`, or takes the argmax when `greedy`.
/// Returns the index and its log-probability.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(
    logits: ArrayView1<T>,
    rng: &mut R,
    greedy: bool,
) -> (usize, T) {
    let lp = log_softmax(logits);
    let index = if greedy {
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    } else {
        let u = T::of(rng.gen::<f64>());
        let mut acc = T::zero();
        let mut chosen = lp.len() - 1;
        for (i, &l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                chosen = i;
                break;
            }
        }
        chosen
    };
    (index, lp[index])
}
