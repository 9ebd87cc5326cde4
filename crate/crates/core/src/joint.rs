//! Joint isotonic estimation of several functions, penalising disagreement
//! where the pairwise tests allow borrowing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::borrowing::{build_weight_field, BorrowingError, PairTester, WeightField, WeightOptions};
use crate::isotonic::{solve_partial_order, DesignPoint, DesignPoset, IsotonicError, IsotonicProblem};
use crate::likelihood::{iso_targets, iso_weights, AlignedDesign, Dataset, LikelihoodError, ModelFamily};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JointError {
    #[error("objective rose from {before} to {after} updating function {function} in sweep {sweep}")]
    DescentViolation { sweep: usize, function: usize, before: f64, after: f64 },
    #[error("function {function} has no value at node {node}")]
    IncompleteValues { function: usize, node: usize },
    #[error("function index {0} out of range")]
    UnknownFunction(usize),
    #[error("weight field is {found_k}x{found_n}, design is {k}x{n}")]
    ShapeMismatch { k: usize, n: usize, found_k: usize, found_n: usize },
    #[error(transparent)]
    Isotonic(#[from] IsotonicError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Borrowing(#[from] BorrowingError),
}

/// Order of block updates within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions<T> {
    /// Stop once no value moves by this much in a sweep.
    pub tol: T,
    pub max_sweeps: usize,
    pub order: SweepOrder,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-8), max_sweeps: 10_000, order: SweepOrder::Ascending }
    }
}

/// Data weights of binomial functions in the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinomialWeighting {
    /// Each row weighs its trial count.
    #[default]
    Trials,
    /// Trial counts divided by the function's mean trial count, so a
    /// typical row weighs one.
    Normalized,
}

/// Everything the block updates need, fixed for the whole descent.
#[derive(Debug, Clone)]
pub struct JointProblem<T> {
    design: AlignedDesign<T>,
    weights: WeightField<T>,
    /// Nodes each function is fitted on: observed or borrowed.
    active: Vec<Vec<usize>>,
    sub: Vec<DesignPoset<T>>,
    row_w: Vec<Vec<T>>,
    row_y: Vec<Vec<T>>,
    /// Factor applied to each function's likelihood weights.
    scale: Vec<T>,
    separate: Vec<Vec<Option<T>>>,
}

impl<T: Real> JointProblem<T> {
    pub fn new(design: AlignedDesign<T>, weights: WeightField<T>) -> Result<Self, JointError> {
        Self::with_weighting(design, weights, BinomialWeighting::Trials)
    }

    pub fn with_weighting(design: AlignedDesign<T>, weights: WeightField<T>, weighting: BinomialWeighting) -> Result<Self, JointError> {
        let (kk, n) = (design.num_functions(), design.num_nodes());
        if weights.num_functions() != kk || weights.num_nodes() != n {
            return Err(JointError::ShapeMismatch { k: kk, n, found_k: weights.num_functions(), found_n: weights.num_nodes() });
        }
        let mut active = Vec::with_capacity(kk);
        let mut sub = Vec::with_capacity(kk);
        let mut row_w = Vec::with_capacity(kk);
        let mut row_y = Vec::with_capacity(kk);
        let mut separate = Vec::with_capacity(kk);
        let mut scale = Vec::with_capacity(kk);
        for k in 0..kk {
            let nodes = design.nodes(k);
            let a: Vec<usize> = (0..n)
                .filter(|&i| nodes.is_observed(i) || weights.total(k, i) > T::zero())
                .collect();
            sub.push(design.poset().induced(&a)?);
            active.push(a);
            let mut w = iso_weights(design.dataset(k), design.family(k))?;
            let factor = match (design.family(k), weighting) {
                (ModelFamily::Binomial, BinomialWeighting::Normalized) => {
                    let total = w.iter().fold(T::zero(), |a, &b| a + b);
                    T::from_usize(w.len()).expect("usize fits") / total
                }
                _ => T::one(),
            };
            w.iter_mut().for_each(|x| *x = *x * factor);
            row_w.push(w);
            scale.push(factor);
            row_y.push(iso_targets(design.dataset(k), design.family(k)));
            separate.push(design.separate_fit(k)?);
        }
        Ok(Self { design, weights, active, sub, row_w, row_y, scale, separate })
    }

    pub fn design(&self) -> &AlignedDesign<T> {
        &self.design
    }

    pub fn weights(&self) -> &WeightField<T> {
        &self.weights
    }

    pub fn num_functions(&self) -> usize {
        self.design.num_functions()
    }

    /// Nodes function `k` is fitted on, in increasing index order.
    pub fn active(&self, k: usize) -> &[usize] {
        &self.active[k]
    }

    /// Separate isotonic fit of function `k`.
    pub fn separate(&self, k: usize) -> &[Option<T>] {
        &self.separate[k]
    }

    /// Starting point: separate fits, with borrowed-only nodes set to the
    /// weighted mean of the donors' separate fits and the result projected
    /// back onto the function's monotone cone.
    pub fn initial_values(&self) -> Result<Vec<Vec<Option<T>>>, JointError> {
        let kk = self.num_functions();
        let mut out = Vec::with_capacity(kk);
        for k in 0..kk {
            let nodes = self.design.nodes(k);
            let a = &self.active[k];
            if a.iter().all(|&i| nodes.is_observed(i)) {
                out.push(self.separate[k].clone());
                continue;
            }
            let mut targets = Vec::with_capacity(a.len());
            let mut weights = Vec::with_capacity(a.len());
            for &i in a {
                if nodes.is_observed(i) {
                    targets.push(self.separate[k][i].expect("observed node is fitted"));
                    weights.push(nodes.weight[i] * self.scale[k]);
                    continue;
                }
                let mut sw = T::zero();
                let mut s = T::zero();
                for p in (0..kk).filter(|&p| p != k) {
                    let w = self.weights.get(k, p, i);
                    if w > T::zero() {
                        let donor = self.separate[p][i].expect("weight implies a donor observation");
                        sw = sw + w;
                        s = s + w * donor;
                    }
                }
                targets.push(s / sw);
                weights.push(sw);
            }
            let problem = IsotonicProblem::new(self.sub[k].graph().clone(), targets, weights)?;
            let sol = solve_partial_order(&problem)?;
            let mut v = vec![None; self.design.num_nodes()];
            for (r, &i) in a.iter().enumerate() {
                v[i] = sol.values[r];
            }
            out.push(v);
        }
        Ok(out)
    }

    fn value(values: &[Vec<Option<T>>], k: usize, i: usize) -> Result<T, JointError> {
        values
            .get(k)
            .and_then(|v| v.get(i).copied().flatten())
            .ok_or(JointError::IncompleteValues { function: k, node: i })
    }

    /// Penalised least-squares objective at `values` (one vector per
    /// function over the union nodes).
    pub fn objective(&self, values: &[Vec<Option<T>>]) -> Result<T, JointError> {
        let kk = self.num_functions();
        let mut total = T::zero();
        for k in 0..kk {
            for ((&i, &w), &y) in self.design.row_nodes(k).iter().zip(&self.row_w[k]).zip(&self.row_y[k]) {
                let e = y - Self::value(values, k, i)?;
                total = total + w * e * e;
            }
            for p in k + 1..kk {
                for i in 0..self.design.num_nodes() {
                    let v = self.weights.get(k, p, i);
                    if v > T::zero() {
                        let d = Self::value(values, k, i)? - Self::value(values, p, i)?;
                        total = total + v * d * d;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Exact minimiser over function `k` with the others held at `values`.
    pub fn block_update(&self, k: usize, values: &[Vec<Option<T>>]) -> Result<Vec<Option<T>>, JointError> {
        let kk = self.num_functions();
        if k >= kk {
            return Err(JointError::UnknownFunction(k));
        }
        let nodes = self.design.nodes(k);
        let a = &self.active[k];
        let mut weights = Vec::with_capacity(a.len());
        let mut targets = Vec::with_capacity(a.len());
        for &i in a {
            let mut w = nodes.weight[i] * self.scale[k];
            let mut s = w * nodes.target[i];
            for p in (0..kk).filter(|&p| p != k) {
                let v = self.weights.get(k, p, i);
                if v > T::zero() {
                    w = w + v;
                    s = s + v * Self::value(values, p, i)?;
                }
            }
            weights.push(w);
            targets.push(s / w);
        }
        let problem = IsotonicProblem::new(self.sub[k].graph().clone(), targets, weights)?;
        let sol = solve_partial_order(&problem)?;
        let mut out = vec![None; self.design.num_nodes()];
        for (r, &i) in a.iter().enumerate() {
            out[i] = sol.values[r];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointFit<T> {
    /// Per function, per union node; `None` outside the function's nodes.
    pub values: Vec<Vec<Option<T>>>,
    /// Nodes fitted only through borrowing.
    pub borrowed_only: Vec<Vec<bool>>,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective_trace: Vec<T>,
    pub converged: bool,
    pub last_change: T,
}

/// Block coordinate descent from the separate fits.
pub fn fit_joint<T: Real>(problem: &JointProblem<T>, options: &FitOptions<T>) -> Result<JointFit<T>, JointError> {
    let kk = problem.num_functions();
    let order: Vec<usize> = match options.order {
        SweepOrder::Ascending => (0..kk).collect(),
        SweepOrder::Descending => (0..kk).rev().collect(),
    };
    let mut values = problem.initial_values()?;
    let mut obj = problem.objective(&values)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut change = T::zero();
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        change = T::zero();
        for &k in &order {
            let next = problem.block_update(k, &values)?;
            for (a, b) in next.iter().zip(&values[k]) {
                if let (Some(a), Some(b)) = (a, b) {
                    change = change.max((*a - *b).abs());
                }
            }
            values[k] = next;
            let after = problem.objective(&values)?;
            if after > obj + lit::<T>(1e-9) * T::one().max(obj.abs()) {
                return Err(JointError::DescentViolation {
                    sweep: sweeps,
                    function: k,
                    before: obj.to_f64().unwrap_or(f64::NAN),
                    after: after.to_f64().unwrap_or(f64::NAN),
                });
            }
            obj = after;
        }
        trace.push(obj);
        if change < options.tol {
            converged = true;
            break;
        }
    }
    let borrowed_only = (0..kk)
        .map(|k| {
            let nodes = problem.design.nodes(k);
            (0..problem.design.num_nodes())
                .map(|i| values[k][i].is_some() && !nodes.is_observed(i))
                .collect()
        })
        .collect();
    Ok(JointFit { values, borrowed_only, sweeps, objective_trace: trace, converged, last_change: change })
}

/// Fitted value of function `k` at an arbitrary point: the largest fitted
/// value among its nodes dominated by `z`.
pub fn predict<T: Real>(problem: &JointProblem<T>, fit: &JointFit<T>, k: usize, z: &DesignPoint<T>) -> Result<T, JointError> {
    let values = fit.values.get(k).ok_or(JointError::UnknownFunction(k))?;
    let poset = problem.design.poset();
    if let Some(m) = poset.dim() {
        if m != z.dim() {
            return Err(IsotonicError::DimensionMismatch { expected: m, found: z.dim(), index: 0 }.into());
        }
    }
    let mut best: Option<T> = None;
    for &i in &problem.active[k] {
        if let Some(v) = values[i] {
            if poset.point(i).precedes(z) && best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
    }
    best.ok_or(IsotonicError::BelowObservedRange.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions<T> {
    pub weights: WeightOptions<T>,
    pub fit: FitOptions<T>,
    /// Estimate unknown Gaussian variances instead of failing.
    pub estimate_variance: bool,
    pub binomial_weighting: BinomialWeighting,
}

impl<T: Real> EstimateOptions<T> {
    pub fn new(alpha: T) -> Self {
        Self { weights: WeightOptions { alpha, cap: false }, fit: FitOptions::default(), estimate_variance: true, binomial_weighting: BinomialWeighting::Trials }
    }
}

#[derive(Debug, Clone)]
pub struct Estimate<T> {
    pub problem: JointProblem<T>,
    pub fit: JointFit<T>,
}

/// Aligns the data, runs every pairwise test and fits the joint model.
pub fn estimate<T: Real>(datasets: Vec<Dataset<T>>, families: Vec<ModelFamily<T>>, options: &EstimateOptions<T>) -> Result<Estimate<T>, JointError> {
    let design = AlignedDesign::new(datasets, families, options.estimate_variance)?;
    let weights = {
        let tester = PairTester::new(&design)?;
        build_weight_field(&tester, &options.weights)?
    };
    let problem = JointProblem::with_weighting(design, weights, options.binomial_weighting)?;
    let fit = fit_joint(&problem, &options.fit)?;
    Ok(Estimate { problem, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::Observation;

    fn data(xs: &[f64], ys: &[f64], k: usize) -> Dataset<f64> {
        let rows = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| Observation::new(DesignPoint::scalar(x).unwrap(), y))
            .collect();
        Dataset::new(k, rows).unwrap()
    }

    fn problem(sets: Vec<Dataset<f64>>, v: &[(usize, usize, usize, f64)]) -> JointProblem<f64> {
        let kk = sets.len();
        let design = AlignedDesign::new(sets, vec![ModelFamily::gaussian(1.0); kk], false).unwrap();
        let mut w = WeightField::zeros(kk, design.num_nodes());
        for &(k, p, i, x) in v {
            w.set(k, p, i, x);
        }
        JointProblem::new(design, w).unwrap()
    }

    #[test]
    fn single_function_is_separate_fit() {
        let jp = problem(vec![data(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], 0)], &[]);
        let fit = fit_joint(&jp, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.sweeps, 1);
        assert_eq!(fit.values[0], vec![Some(2.0); 3]);
    }

    #[test]
    fn zero_weights_decouple() {
        let jp = problem(vec![data(&[1.0, 2.0], &[1.0, 2.0], 0), data(&[1.0, 2.0], &[5.0, 4.0], 1)], &[]);
        let fit = fit_joint(&jp, &FitOptions::default()).unwrap();
        assert_eq!(fit.values[0], vec![Some(1.0), Some(2.0)]);
        assert_eq!(fit.values[1], vec![Some(4.5), Some(4.5)]);
    }

    #[test]
    fn single_node_pair_closed_form() {
        // min (a - 0)^2 + (b - 2)^2 + (a - b)^2: a = 2/3, b = 4/3.
        let jp = problem(vec![data(&[1.0], &[0.0], 0), data(&[1.0], &[2.0], 1)], &[(0, 1, 0, 1.0)]);
        let fit = fit_joint(&jp, &FitOptions { tol: 1e-13, ..FitOptions::default() }).unwrap();
        assert!((fit.values[0][0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((fit.values[1][0].unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn borrowed_only_nodes_start_at_donor() {
        let jp = problem(
            vec![data(&[1.0, 3.0], &[1.0, 3.0], 0), data(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1)],
            &[(0, 1, 1, 1.0)],
        );
        assert_eq!(jp.active(0), &[0, 1, 2]);
        let init = jp.initial_values().unwrap();
        assert_eq!(init[0][1], Some(2.0));
        let fit = fit_joint(&jp, &FitOptions::default()).unwrap();
        assert_eq!(fit.borrowed_only[0], vec![false, true, false]);
        assert_eq!(fit.values[0][1], Some(2.0));
        assert_eq!(predict(&jp, &fit, 0, &DesignPoint::scalar(2.5).unwrap()).unwrap(), 2.0);
        assert!(predict(&jp, &fit, 0, &DesignPoint::scalar(0.5).unwrap()).is_err());
    }

    #[test]
    fn incomplete_values_rejected() {
        let jp = problem(vec![data(&[1.0], &[0.0], 0)], &[]);
        assert_eq!(jp.objective(&[vec![None]]).unwrap_err(), JointError::IncompleteValues { function: 0, node: 0 });
    }

    #[test]
    fn estimate_end_to_end() {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let a: Vec<f64> = xs.iter().map(|x| x / 10.0).collect();
        let b: Vec<f64> = xs.iter().map(|x| x / 10.0 + if (*x as i32) % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let est = estimate(
            vec![data(&xs, &a, 0), data(&xs, &b, 1)],
            vec![ModelFamily::gaussian(1.0); 2],
            &EstimateOptions::new(0.05),
        )
        .unwrap();
        assert!(est.fit.converged);
        for k in 0..2 {
            let v: Vec<f64> = est.fit.values[k].iter().map(|v| v.unwrap()).collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
