//! Accuracy measures and summary statistics.

use serde::{Deserialize, Serialize};

use super::SimError;

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean squared error of one function.
pub fn mse(fitted: &[f64], truth: &[f64]) -> Result<f64, SimError> {
    if fitted.is_empty() || fitted.len() != truth.len() {
        return Err(SimError::NoEvalPoints);
    }
    let s: f64 = fitted.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / fitted.len() as f64)
}

/// Root of the average over functions of each function's mean squared
/// error at its evaluation points.
pub fn rmse(fitted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64, SimError> {
    if fitted.is_empty() || fitted.len() != truth.len() {
        return Err(SimError::NoEvalPoints);
    }
    let mut total = 0.0;
    for (f, t) in fitted.iter().zip(truth) {
        total += mse(f, t)?;
    }
    Ok((total / fitted.len() as f64).sqrt())
}

/// Median and quartiles of the ratio `R`, with `P` the share of ratios
/// strictly below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub p: f64,
}

/// Summarises `(rmse_joint, rmse_separate)` pairs.
pub fn r_and_p(pairs: &[(f64, f64)]) -> Result<RSummary, SimError> {
    if pairs.is_empty() {
        return Err(SimError::NoEvalPoints);
    }
    let mut ratios = Vec::with_capacity(pairs.len());
    for (rep, &(joint, sep)) in pairs.iter().enumerate() {
        if sep == 0.0 {
            return Err(SimError::DegenerateBaseline { replication: rep });
        }
        ratios.push(joint / sep);
    }
    let below = ratios.iter().filter(|&&r| r < 1.0).count();
    let s = sorted(&ratios);
    Ok(RSummary {
        median: quantile_sorted(&s, 0.5),
        q1: quantile_sorted(&s, 0.25),
        q3: quantile_sorted(&s, 0.75),
        p: below as f64 / ratios.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(rmse(&[vec![1.0, 2.0]], &[vec![0.0, 1.0]]).unwrap(), 1.0);
        // Per-function MSE 0.25 and 0.75.
        let r = rmse(&[vec![0.5], vec![0.75f64.sqrt()]], &[vec![0.0], vec![0.0]]).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[vec![]], &[vec![]]), Err(SimError::NoEvalPoints));
    }

    #[test]
    fn r_and_p_examples() {
        let s = r_and_p(&[(0.9, 1.0); 5]).unwrap();
        assert!((s.median - 0.9).abs() < 1e-15);
        assert_eq!(s.p, 1.0);
        let s = r_and_p(&[(0.8, 1.0), (1.0, 1.0), (1.2, 1.0)]).unwrap();
        assert_eq!(s.median, 1.0);
        assert!((s.p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r_and_p(&[(1.0, 0.0)]), Err(SimError::DegenerateBaseline { replication: 0 }));
    }

    #[test]
    fn type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }
}
