use super::poset::{DesignPoint, DesignPoset};
use super::solve::IsotonicSolution;
use super::IsotonicError;
use crate::scalar::Scalar;

/// Piecewise-constant isotonic interpolant: the largest fitted value among
/// design points dominated by `z`.
pub fn interpolate<T: Scalar>(
    solution: &IsotonicSolution<T>,
    poset: &DesignPoset<T>,
    z: &DesignPoint<T>,
) -> Result<T, IsotonicError> {
    if let Some(m) = poset.dim() {
        if m != z.dim() {
            return Err(IsotonicError::DimensionMismatch { expected: m, found: z.dim(), index: 0 });
        }
    }
    let mut best: Option<&T> = None;
    for (p, v) in poset.points().iter().zip(&solution.values) {
        if let Some(v) = v {
            if p.precedes(z) && best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
    }
    best.cloned().ok_or(IsotonicError::BelowObservedRange)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isotonic::{build_poset, solve_partial_order, IsotonicProblem};

    fn pt(c: &[f64]) -> DesignPoint<f64> {
        DesignPoint::new(c.to_vec()).unwrap()
    }

    fn fitted(poset: &DesignPoset<f64>, y: Vec<f64>) -> IsotonicSolution<f64> {
        let n = y.len();
        let p = IsotonicProblem::new(poset.graph().clone(), y, vec![1.0; n]).unwrap();
        solve_partial_order(&p).unwrap()
    }

    #[test]
    fn step_function_on_a_line() {
        let poset = build_poset(vec![pt(&[1.0]), pt(&[2.0]), pt(&[3.0])]).unwrap();
        let sol = fitted(&poset, vec![1.0, 2.0, 3.0]);
        assert_eq!(interpolate(&sol, &poset, &pt(&[2.5])).unwrap(), 2.0);
        assert_eq!(interpolate(&sol, &poset, &pt(&[3.0])).unwrap(), 3.0);
        assert_eq!(interpolate(&sol, &poset, &pt(&[9.0])).unwrap(), 3.0);
        assert_eq!(interpolate(&sol, &poset, &pt(&[0.5])).unwrap_err(), IsotonicError::BelowObservedRange);
    }

    #[test]
    fn max_over_dominated_points_in_2d() {
        let poset = build_poset(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0])]).unwrap();
        let sol = fitted(&poset, vec![1.0, 2.0, 3.0]);
        assert_eq!(interpolate(&sol, &poset, &pt(&[1.0, 1.0])).unwrap(), 3.0);
        assert_eq!(interpolate(&sol, &poset, &pt(&[1.0, 0.5])).unwrap(), 2.0);
        assert!(interpolate(&sol, &poset, &pt(&[1.0])).is_err());
    }

    #[test]
    fn reproduces_fit_at_design_points() {
        let poset = build_poset(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 1.0]), pt(&[1.0, 1.0])]).unwrap();
        let sol = fitted(&poset, vec![0.5, 3.0, -1.0, 2.0]);
        for i in 0..poset.len() {
            assert_eq!(interpolate(&sol, &poset, poset.point(i)).unwrap(), *sol.value(i).unwrap());
        }
    }
}
