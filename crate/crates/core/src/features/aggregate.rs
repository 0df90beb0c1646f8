use crate::scalar::Scalar;

use super::record::{NormalizedRecord, NO_SUM_FEATURES, NUM_FEATURES};

/// Statistics emitted per feature, in this order.
pub const AGGREGATES: [&str; 5] = ["sum", "mean", "std", "min", "max"];
pub const AGGREGATE_LEN: usize = NUM_FEATURES * AGGREGATES.len();

/// Summary statistics of one column.
///
/// Values are sorted before reduction so the result does not depend on the
/// order records arrived in, bit for bit. `std` is the population deviation.
pub fn column_stats<T: Scalar>(values: &mut [T]) -> [T; 5] {
    if values.is_empty() {
        return [T::zero(); 5];
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let n = T::of(values.len() as f64);
    let sum = compensated_sum(values.iter().copied());
    let mean = sum / n;
    let var = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / n;
    [sum, mean, var.sqrt(), values[0], values[values.len() - 1]]
}

fn compensated_sum<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    // Neumaier summation
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Flattens a window of normalized records into `20 × [sum, mean, std, min, max]`.
/// Sums of features 1-9 are forced to zero; an empty window yields all zeros.
pub fn aggregate_window<T: Scalar>(records: &[[T; NUM_FEATURES]]) -> Vec<T> {
    let mut out = Vec::with_capacity(AGGREGATE_LEN);
    let mut column = Vec::with_capacity(records.len());
    for f in 0..NUM_FEATURES {
        column.clear();
        column.extend(records.iter().map(|r| r[f]));
        let mut stats = column_stats(&mut column);
        if NO_SUM_FEATURES.contains(&f) {
            stats[0] = T::zero();
        }
        out.extend_from_slice(&stats);
    }
    out
}

/// `aggregate_window` over `f64` records as produced by the transport.
pub fn aggregate_records(records: &[NormalizedRecord]) -> Vec<f64> {
    let rows: Vec<[f64; NUM_FEATURES]> = records.iter().map(|r| r.0).collect();
    aggregate_window(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(feature: usize, stat: usize) -> usize {
        feature * 5 + stat
    }

    #[test]
    fn acked_bytes_stats() {
        let mut a = [0.0f64; NUM_FEATURES];
        let mut b = [0.0f64; NUM_FEATURES];
        a[12] = 0.1;
        b[12] = 0.3;
        let agg = aggregate_window(&[a, b]);
        let got = &agg[idx(12, 0)..idx(12, 0) + 5];
        let want = [0.4, 0.2, 0.1, 0.1, 0.3];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
    }

    #[test]
    fn lrtt_sum_slot_is_zeroed() {
        let mut a = [0.0f64; NUM_FEATURES];
        let mut b = [0.0f64; NUM_FEATURES];
        a[0] = 0.05;
        b[0] = 0.07;
        let agg = aggregate_window(&[a, b]);
        assert_eq!(agg[idx(0, 0)], 0.0);
        assert!((agg[idx(0, 1)] - 0.06).abs() < 1e-15);
    }

    #[test]
    fn empty_window_is_all_zero() {
        let agg = aggregate_window::<f64>(&[]);
        assert_eq!(agg.len(), AGGREGATE_LEN);
        assert!(agg.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_record_has_zero_std() {
        let r: [f64; NUM_FEATURES] = std::array::from_fn(|i| i as f64 * 0.1 + 0.01);
        let agg = aggregate_window(&[r]);
        for f in 0..NUM_FEATURES {
            assert_eq!(agg[idx(f, 2)], 0.0);
            assert_eq!(agg[idx(f, 1)], agg[idx(f, 3)]);
            assert_eq!(agg[idx(f, 3)], agg[idx(f, 4)]);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let mut a = [0.0f32; NUM_FEATURES];
        let mut b = [0.0f32; NUM_FEATURES];
        a[15] = 1.0;
        b[15] = 3.0;
        let agg = aggregate_window(&[a, b]);
        assert_eq!(&agg[idx(15, 0)..idx(15, 0) + 5], &[4.0, 2.0, 1.0, 1.0, 3.0]);
    }
}
