//! Pairwise likelihood-ratio tests of equality at a design point and the
//! borrowing weights derived from them.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::isotonic::pava::{pava_runs, Run};
use crate::isotonic::{solve_partial_order, IsotonicError, IsotonicProblem};
use crate::likelihood::{binomial_kernel, AlignedDesign, LikelihoodError, ModelFamily};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BorrowingError {
    #[error("probability {0} outside (0, 1)")]
    DomainError(f64),
    #[error("invalid function pair ({k}, {p})")]
    InvalidPair { k: usize, p: usize },
    #[error("node {node} is out of range")]
    NodeOutOfRange { node: usize },
    #[error("node {node} is observed by neither function {k} nor {p}")]
    Unobserved { k: usize, p: usize, node: usize },
    #[error("node {node} cannot be tested for functions {k} and {p}")]
    PointNotTestable { k: usize, p: usize, node: usize },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Isotonic(#[from] IsotonicError),
}

/// Upper `1 - prob` point of the chi-square distribution with one degree of
/// freedom, i.e. its `prob` quantile.
pub fn chi2_quantile_1df<T: Real>(prob: T) -> Result<T, BorrowingError> {
    let p = prob.to_f64().unwrap_or(f64::NAN);
    if !(p > 0.0 && p < 1.0) {
        return Err(BorrowingError::DomainError(p));
    }
    let z = Normal::standard().inverse_cdf((1.0 + p) / 2.0);
    Ok(lit(z * z))
}

/// Rejection threshold of the level-`alpha` test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrThreshold<T> {
    pub alpha: T,
    pub quantile: T,
}

impl<T: Real> LrThreshold<T> {
    pub fn new(alpha: T) -> Result<Self, BorrowingError> {
        Ok(Self { alpha, quantile: chi2_quantile_1df(T::one() - alpha)? })
    }

    /// `max(0, 1 - lr / q)`, and exactly one when `lr` is zero.
    pub fn weight(&self, lr: T) -> T {
        if lr <= T::zero() {
            return T::one();
        }
        (T::one() - lr / self.quantile).max(T::zero())
    }

    pub fn rejects(&self, lr: T) -> bool {
        lr > self.quantile
    }
}

pub fn weight_from_lr<T: Real>(lr: T, alpha: T) -> Result<T, BorrowingError> {
    Ok(LrThreshold::new(alpha)?.weight(lr))
}

/// Null fit of a pair: both functions isotonic, tied at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TiedPairFit<T> {
    pub node: usize,
    pub tied_value: T,
    /// Per union node; `None` where the function is unobserved (except at
    /// the tied node).
    pub values_k: Vec<Option<T>>,
    pub values_p: Vec<Option<T>>,
}

impl<T> TiedPairFit<T> {
    fn swapped(self) -> Self {
        Self { node: self.node, tied_value: self.tied_value, values_k: self.values_p, values_p: self.values_k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTestResult<T> {
    pub k: usize,
    pub p: usize,
    pub node: usize,
    pub lr: T,
    /// Whether tying the pair changed either fit.
    pub constrained_active: bool,
    pub weight: T,
}

const ACTIVE_TOL: f64 = 1e-9;
const NEGATIVE_LR_TOL: f64 = 1e-10;

/// Runs pairwise tests on an aligned design, caching the separate fits.
#[derive(Debug)]
pub struct PairTester<'a, T> {
    design: &'a AlignedDesign<T>,
    chain: Option<Vec<usize>>,
    rank: Vec<usize>,
    alt: Vec<Vec<Option<T>>>,
}

impl<'a, T: Real> PairTester<'a, T> {
    pub fn new(design: &'a AlignedDesign<T>) -> Result<Self, BorrowingError> {
        let alt = (0..design.num_functions())
            .map(|k| design.separate_fit(k))
            .collect::<Result<Vec<_>, _>>()?;
        let chain = if design.poset().dim() == Some(1) { design.poset().graph().chain_order() } else { None };
        let mut rank = vec![0; design.num_nodes()];
        if let Some(order) = &chain {
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
            }
        }
        Ok(Self { design, chain, rank, alt })
    }

    pub fn design(&self) -> &AlignedDesign<T> {
        self.design
    }

    /// Separate fit of function `k` on the union nodes.
    pub fn alternative(&self, k: usize) -> &[Option<T>] {
        &self.alt[k]
    }

    fn check(&self, k: usize, p: usize, t: usize) -> Result<(), BorrowingError> {
        let kk = self.design.num_functions();
        if k == p || k >= kk || p >= kk {
            return Err(BorrowingError::InvalidPair { k, p });
        }
        if t >= self.design.num_nodes() {
            return Err(BorrowingError::NodeOutOfRange { node: t });
        }
        if !self.design.nodes(k).is_observed(t) && !self.design.nodes(p).is_observed(t) {
            return Err(BorrowingError::Unobserved { k, p, node: t });
        }
        Ok(())
    }

    /// Null fit with the pair tied at node `t`. One-dimensional designs use
    /// a clipped-PAVA search over the tied value; others the general solver.
    pub fn null_fit(&self, k: usize, p: usize, t: usize) -> Result<TiedPairFit<T>, BorrowingError> {
        self.check(k, p, t)?;
        if k > p {
            return self.null_fit(p, k, t).map(TiedPairFit::swapped);
        }
        match &self.chain {
            Some(order) => Ok(self.chain_null(order, k, p, t)),
            None => self.general_null(k, p, t),
        }
    }

    /// Null fit through the general merged-node solver, for any design.
    pub fn null_fit_general(&self, k: usize, p: usize, t: usize) -> Result<TiedPairFit<T>, BorrowingError> {
        self.check(k, p, t)?;
        if k > p {
            return self.null_fit_general(p, k, t).map(TiedPairFit::swapped);
        }
        self.general_null(k, p, t)
    }

    fn general_null(&self, k: usize, p: usize, t: usize) -> Result<TiedPairFit<T>, BorrowingError> {
        let n = self.design.num_nodes();
        let graph = self.design.poset().graph();
        let (dk, dp) = (self.design.nodes(k), self.design.nodes(p));
        let targets = dk.target.iter().chain(&dp.target).copied().collect();
        let weights = dk.weight.iter().chain(&dp.weight).copied().collect();
        let problem = IsotonicProblem::new(graph.disjoint_union(graph), targets, weights)?.with_merge(vec![t, n + t])?;
        let mut values = solve_partial_order(&problem)?.values;
        let values_p = values.split_off(n);
        let tied_value = values[t].expect("tied node has positive weight");
        Ok(TiedPairFit { node: t, tied_value, values_k: values, values_p })
    }

    fn chain_null(&self, order: &[usize], k: usize, p: usize, t: usize) -> TiedPairFit<T> {
        let rt = self.rank[t];
        let sides = |f: usize| {
            let d = self.design.nodes(f);
            let pick = |range: &[usize]| -> (Vec<usize>, Vec<Run<T>>) {
                let idx: Vec<usize> = range.iter().copied().filter(|&i| d.is_observed(i)).collect();
                let y: Vec<T> = idx.iter().map(|&i| d.target[i]).collect();
                let w: Vec<T> = idx.iter().map(|&i| d.weight[i]).collect();
                let runs = pava_runs(&y, &w);
                (idx, runs)
            };
            (pick(&order[..rt]), pick(&order[rt + 1..]))
        };
        let (left_k, right_k) = sides(k);
        let (left_p, right_p) = sides(p);

        // Minimise over the tied value c. Left runs pull c down while their
        // value exceeds c; right runs pull it up while below c.
        let (dk, dp) = (self.design.nodes(k), self.design.nodes(p));
        let mut s = dk.weight[t] * dk.target[t] + dp.weight[t] * dp.target[t];
        let mut w = dk.weight[t] + dp.weight[t];
        let mut events: Vec<(T, bool, T, T)> = Vec::new();
        for run in left_k.1.iter().chain(&left_p.1) {
            s = s + run.weighted_sum;
            w = w + run.weight;
            events.push((run.value, true, run.weight, run.weighted_sum));
        }
        for run in right_k.1.iter().chain(&right_p.1) {
            events.push((run.value, false, run.weight, run.weighted_sum));
        }
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite run values"));
        let mut c = s / w;
        let mut e = 0;
        while e < events.len() && c > events[e].0 {
            let at = events[e].0;
            while e < events.len() && events[e].0 == at {
                let (_, left, rw, rs) = events[e];
                if left {
                    s = s - rs;
                    w = w - rw;
                } else {
                    s = s + rs;
                    w = w + rw;
                }
                e += 1;
            }
            c = s / w;
        }

        let n = self.design.num_nodes();
        let fill = |(left, right): ((Vec<usize>, Vec<Run<T>>), (Vec<usize>, Vec<Run<T>>))| {
            let mut v = vec![None; n];
            v[t] = Some(c);
            let mut pos = 0;
            for run in &left.1 {
                for &i in &left.0[pos..pos + run.len] {
                    v[i] = Some(run.value.min(c));
                }
                pos += run.len;
            }
            pos = 0;
            for run in &right.1 {
                for &i in &right.0[pos..pos + run.len] {
                    v[i] = Some(run.value.max(c));
                }
                pos += run.len;
            }
            v
        };
        TiedPairFit { node: t, tied_value: c, values_k: fill((left_k, right_k)), values_p: fill((left_p, right_p)) }
    }

    /// Likelihood-ratio statistic of "functions `k` and `p` agree at node
    /// `t`" against the separate fits.
    pub fn lr_statistic(&self, fit: &TiedPairFit<T>, k: usize, p: usize) -> Result<(T, bool), BorrowingError> {
        let mut lr = T::zero();
        let mut active = false;
        let tol = lit::<T>(ACTIVE_TOL);
        let mut sides = [(k, &fit.values_k), (p, &fit.values_p)];
        sides.sort_by_key(|s| s.0);
        for (f, null) in sides {
            let d = self.design.nodes(f);
            let family = self.design.family(f);
            for i in d.observed() {
                let v0 = null[i].expect("observed node has a null value");
                let v1 = self.alt[f][i].expect("observed node has a fitted value");
                if v0 == v1 {
                    continue;
                }
                if (v0 - v1).abs() > tol {
                    active = true;
                }
                lr = lr + node_deviance(family, d.weight[i], d.target[i], v0, v1, i)?;
            }
        }
        if !active {
            return Ok((T::zero(), false));
        }
        if lr < T::zero() {
            if lr < -lit::<T>(NEGATIVE_LR_TOL) {
                return Err(LikelihoodError::NullBeatsAlternative {
                    rss0: 0.0,
                    rss1: -lr.to_f64().unwrap_or(f64::NAN),
                }
                .into());
            }
            lr = T::zero();
        }
        Ok((lr, true))
    }

    /// Tests functions `k` and `p` at node `t`, which one of them must
    /// observe.
    pub fn test(&self, k: usize, p: usize, t: usize, threshold: &LrThreshold<T>) -> Result<PairTestResult<T>, BorrowingError> {
        let fit = self.null_fit(k, p, t)?;
        let (lr, constrained_active) = self.lr_statistic(&fit, k, p)?;
        Ok(PairTestResult { k, p, node: t, lr, constrained_active, weight: threshold.weight(lr) })
    }

    /// Like [`PairTester::test`], but also refuses nodes outside the
    /// observed range of either function.
    pub fn test_eligible(&self, k: usize, p: usize, t: usize, threshold: &LrThreshold<T>) -> Result<PairTestResult<T>, BorrowingError> {
        self.check(k, p, t)?;
        if extrapolates(self.design, k, t) || extrapolates(self.design, p, t) {
            return Err(BorrowingError::PointNotTestable { k, p, node: t });
        }
        self.test(k, p, t, threshold)
    }
}

/// `-2 log` likelihood ratio contribution of one node.
fn node_deviance<T: Real>(family: &ModelFamily<T>, w: T, y: T, v0: T, v1: T, node: usize) -> Result<T, LikelihoodError> {
    match family {
        ModelFamily::Gaussian { .. } => Ok(w * (v1 - v0) * (y + y - v0 - v1)),
        ModelFamily::Binomial => {
            let s = w * y;
            let two = lit::<T>(2.0);
            Ok(two * (binomial_kernel(s, w, v1, node)? - binomial_kernel(s, w, v0, node)?))
        }
    }
}

/// `true` when node `t` dominates, or is dominated by, every observed
/// point of function `k`.
pub fn extrapolates<T: Real>(design: &AlignedDesign<T>, k: usize, t: usize) -> bool {
    let poset = design.poset();
    let zt = poset.point(t);
    let d = design.nodes(k);
    let mut above_all = true;
    let mut below_all = true;
    for i in d.observed() {
        let zi = poset.point(i);
        above_all &= zi.precedes(zt);
        below_all &= zt.precedes(zi);
        if !above_all && !below_all {
            return false;
        }
    }
    above_all || below_all
}

/// Per-node mask of [`extrapolates`] for function `k`.
pub fn extrapolation_mask<T: Real>(design: &AlignedDesign<T>, k: usize) -> Vec<bool> {
    (0..design.num_nodes()).map(|t| extrapolates(design, k, t)).collect()
}

/// Symmetric borrowing weights `v[k][p][i]`, zero wherever untested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightField<T> {
    functions: usize,
    nodes: usize,
    /// One row per unordered pair `k < p`.
    values: Vec<Vec<T>>,
    tests: Vec<PairTestResult<T>>,
}

impl<T: Real> WeightField<T> {
    pub fn zeros(functions: usize, nodes: usize) -> Self {
        let pairs = functions * functions.saturating_sub(1) / 2;
        Self { functions, nodes, values: vec![vec![T::zero(); nodes]; pairs], tests: Vec::new() }
    }

    fn pair_index(&self, k: usize, p: usize) -> usize {
        let (a, b) = if k < p { (k, p) } else { (p, k) };
        assert!(a != b && b < self.functions, "invalid pair ({k}, {p})");
        a * (2 * self.functions - a - 1) / 2 + (b - a - 1)
    }

    pub fn num_functions(&self) -> usize {
        self.functions
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, k: usize, p: usize, i: usize) -> T {
        if k == p {
            return T::zero();
        }
        self.values[self.pair_index(k, p)][i]
    }

    pub fn set(&mut self, k: usize, p: usize, i: usize, v: T) {
        let r = self.pair_index(k, p);
        self.values[r][i] = v;
    }

    /// Test results behind the weights, in pair-then-node order.
    pub fn tests(&self) -> &[PairTestResult<T>] {
        &self.tests
    }

    /// Sum over partners of the weights of function `k` at node `i`.
    pub fn total(&self, k: usize, i: usize) -> T {
        (0..self.functions).filter(|&p| p != k).fold(T::zero(), |acc, p| acc + self.get(k, p, i))
    }

    /// Caps every weight at `max`.
    pub fn cap(&mut self, max: T) {
        for row in &mut self.values {
            for v in row.iter_mut() {
                *v = v.min(max);
            }
        }
        for t in &mut self.tests {
            t.weight = t.weight.min(max);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOptions<T> {
    pub alpha: T,
    /// Cap each weight at `1 / (K - 1)`.
    pub cap: bool,
}

/// Tests every pair at every eligible node: observed by at least one of the
/// two functions and inside the observed range of both.
pub fn build_weight_field<T: Real>(tester: &PairTester<'_, T>, options: &WeightOptions<T>) -> Result<WeightField<T>, BorrowingError> {
    let design = tester.design();
    let kk = design.num_functions();
    let n = design.num_nodes();
    let threshold = LrThreshold::new(options.alpha)?;
    let masks: Vec<Vec<bool>> = (0..kk).map(|k| extrapolation_mask(design, k)).collect();
    let mut cells = Vec::new();
    for k in 0..kk {
        for p in k + 1..kk {
            for t in 0..n {
                let seen = design.nodes(k).is_observed(t) || design.nodes(p).is_observed(t);
                if seen && !masks[k][t] && !masks[p][t] {
                    cells.push((k, p, t));
                }
            }
        }
    }
    let tests = cells
        .par_iter()
        .map(|&(k, p, t)| tester.test(k, p, t, &threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let mut field = WeightField::zeros(kk, n);
    for r in &tests {
        field.set(r.k, r.p, r.node, r.weight);
    }
    field.tests = tests;
    if options.cap && kk > 2 {
        field.cap(T::one() / T::from_usize(kk - 1).expect("usize fits"));
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isotonic::DesignPoint;
    use crate::likelihood::{Dataset, Observation};

    fn design(ys: &[&[f64]]) -> AlignedDesign<f64> {
        let data = ys
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let rows = y
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| Observation::new(DesignPoint::scalar(i as f64 + 1.0).unwrap(), v))
                    .collect();
                Dataset::new(k, rows).unwrap()
            })
            .collect();
        AlignedDesign::new(data, vec![ModelFamily::gaussian(1.0); ys.len()], false).unwrap()
    }

    #[test]
    fn quantiles() {
        assert!((chi2_quantile_1df::<f64>(0.95).unwrap() - 3.841458820694124).abs() < 1e-9);
        assert!((chi2_quantile_1df::<f64>(0.90).unwrap() - 2.705543454095404).abs() < 1e-9);
        assert!((chi2_quantile_1df::<f64>(0.5).unwrap() - 0.454936423119572).abs() < 1e-9);
        assert_eq!(chi2_quantile_1df(1.0), Err(BorrowingError::DomainError(1.0)));
        assert_eq!(chi2_quantile_1df(0.0), Err(BorrowingError::DomainError(0.0)));
    }

    #[test]
    fn weights() {
        let th = LrThreshold::<f64>::new(0.05).unwrap();
        assert_eq!(th.weight(0.0), 1.0);
        assert!((th.weight(th.quantile / 2.0) - 0.5f64).abs() < 1e-15);
        assert_eq!(th.weight(th.quantile), 0.0);
        assert_eq!(th.weight(10.0), 0.0);
    }

    #[test]
    fn identical_functions_get_full_weight() {
        let d = design(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        let tester = PairTester::new(&d).unwrap();
        let th = LrThreshold::<f64>::new(0.05).unwrap();
        let r = tester.test(0, 1, 1, &th).unwrap();
        assert_eq!(r.lr, 0.0);
        assert!(!r.constrained_active);
        assert_eq!(r.weight, 1.0);
    }

    #[test]
    fn separated_functions_get_zero_weight() {
        let d = design(&[&[0.0, 0.0, 0.0], &[10.0, 10.0, 10.0]]);
        let tester = PairTester::new(&d).unwrap();
        let th = LrThreshold::<f64>::new(0.05).unwrap();
        let r = tester.test(0, 1, 1, &th).unwrap();
        // Tie at 5 clips one neighbour of each function to 5.
        assert!((r.lr - 100.0).abs() < 1e-12);
        assert!(r.constrained_active);
        assert_eq!(r.weight, 0.0);
    }

    #[test]
    fn tied_fit_example() {
        // f0: y = (1, 2), f1: y = (3, 1); tied at the second node.
        let d = design(&[&[1.0, 2.0], &[3.0, 1.0]]);
        let tester = PairTester::new(&d).unwrap();
        let fit = tester.null_fit(0, 1, 1).unwrap();
        assert!((fit.tied_value - 2.0).abs() < 1e-15);
        assert_eq!(fit.values_k, vec![Some(1.0), Some(2.0)]);
        assert_eq!(fit.values_p, vec![Some(2.0), Some(2.0)]);
        let gen = tester.null_fit_general(0, 1, 1).unwrap();
        assert_eq!(gen, fit);
    }

    #[test]
    fn chain_and_general_null_agree() {
        let d = design(&[&[0.3, 1.2, 0.7, 2.5, 1.9, 3.0], &[1.5, 0.2, 2.2, 2.0, 4.1, 3.3], &[2.0, 2.0, 1.0, 0.0, 5.0, 4.0]]);
        let tester = PairTester::new(&d).unwrap();
        for (k, p) in [(0, 1), (0, 2), (1, 2)] {
            for t in 0..6 {
                let a = tester.null_fit(k, p, t).unwrap();
                let b = tester.null_fit_general(k, p, t).unwrap();
                assert!((a.tied_value - b.tied_value).abs() < 1e-12);
                for (x, y) in a.values_k.iter().chain(&a.values_p).zip(b.values_k.iter().chain(&b.values_p)) {
                    assert!((x.unwrap() - y.unwrap()).abs() < 1e-12, "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn endpoints_are_masked() {
        let d = design(&[&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(extrapolation_mask(&d, 0), vec![true, false, false, true]);
        let tester = PairTester::new(&d).unwrap();
        let f = build_weight_field(&tester, &WeightOptions { alpha: 0.05, cap: false }).unwrap();
        assert_eq!(f.tests().len(), 2);
        assert_eq!(f.get(0, 1, 0), 0.0);
        assert_eq!(f.get(1, 0, 1), 1.0);
        assert_eq!(f.get(0, 1, 2), 1.0);
        let th = LrThreshold::<f64>::new(0.05).unwrap();
        assert_eq!(tester.test_eligible(0, 1, 3, &th).unwrap_err(), BorrowingError::PointNotTestable { k: 0, p: 1, node: 3 });
    }

    #[test]
    fn cap_applies_for_three_functions() {
        let d = design(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        let tester = PairTester::new(&d).unwrap();
        let f = build_weight_field(&tester, &WeightOptions { alpha: 0.05, cap: true }).unwrap();
        assert_eq!(f.get(0, 2, 1), 0.5);
        assert_eq!(f.total(1, 1), 1.0);
    }

    #[test]
    fn bad_pairs() {
        let d = design(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let tester = PairTester::new(&d).unwrap();
        assert_eq!(tester.null_fit(0, 0, 0).unwrap_err(), BorrowingError::InvalidPair { k: 0, p: 0 });
        assert_eq!(tester.null_fit(0, 1, 7).unwrap_err(), BorrowingError::NodeOutOfRange { node: 7 });
    }
}
