//! Pool-adjacent-violators for totally ordered problems.

use crate::scalar::Scalar;

/// A pooled run of consecutive chain positions.
#[derive(Clone, Debug)]
pub(crate) struct Run<T> {
    pub value: T,
    pub weight: T,
    pub len: usize,
    pub weighted_sum: T,
}

/// Weighted PAVA over `targets` in chain order. All weights must be positive.
pub(crate) fn pava_runs<T: Scalar>(targets: &[T], weights: &[T]) -> Vec<Run<T>> {
    debug_assert_eq!(targets.len(), weights.len());
    let mut runs: Vec<Run<T>> = Vec::with_capacity(targets.len());
    for (y, w) in targets.iter().zip(weights) {
        let mut cur = Run { value: y.clone(), weight: w.clone(), len: 1, weighted_sum: w.clone() * y.clone() };
        while let Some(last) = runs.last() {
            if last.value <= cur.value {
                break;
            }
            let last = runs.pop().expect("checked non-empty");
            let weighted_sum = last.weighted_sum + cur.weighted_sum;
            let weight = last.weight + cur.weight;
            cur = Run { value: weighted_sum.clone() / weight.clone(), weight, len: last.len + cur.len, weighted_sum };
        }
        runs.push(cur);
    }
    runs
}

/// Expands runs back to one value per chain position.
pub(crate) fn expand<T: Scalar>(runs: &[Run<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(runs.iter().map(|r| r.len).sum());
    for r in runs {
        out.extend(std::iter::repeat_n(r.value.clone(), r.len));
    }
    out
}

pub(crate) fn pava<T: Scalar>(targets: &[T], weights: &[T]) -> Vec<T> {
    expand(&pava_runs(targets, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_input_is_fixed_point() {
        assert_eq!(pava(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn full_pool() {
        assert_eq!(pava(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn weighted_pool() {
        let v: Vec<f64> = pava(&[1.0, 3.0, 2.0], &[1.0, 1.0, 2.0]);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[1], v[2]);
    }

    #[test]
    fn runs_carry_weights() {
        let runs = pava_runs(&[2.0, 1.0, 5.0], &[1.0, 3.0, 2.0]);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].weight, 4.0);
        assert_eq!(runs[0].len, 2);
        assert_eq!(runs[1].value, 5.0);
    }
}
