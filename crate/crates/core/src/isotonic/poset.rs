use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::IsotonicError;
use crate::scalar::Scalar;

/// A covariate vector. Ordered componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint<T>(Vec<T>);

impl<T: Scalar> DesignPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self, IsotonicError> {
        if coords.is_empty() {
            return Err(IsotonicError::EmptyPoint);
        }
        if coords.iter().any(|c| !c.is_finite_value()) {
            return Err(IsotonicError::NonFinite("design point coordinate"));
        }
        Ok(Self(coords))
    }

    /// One-dimensional point.
    pub fn scalar(x: T) -> Result<Self, IsotonicError> {
        Self::new(vec![x])
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Componentwise `self <= other`. Points of different dimension are
    /// never comparable.
    pub fn precedes(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Lexicographic order; a linear extension of [`precedes`](Self::precedes).
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.partial_cmp(b).expect("coordinates are finite") {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// Directed constraint graph: an edge `(i, j)` requires `value_i <= value_j`.
///
/// Cycles are tolerated by the solvers (they force equality); graphs built
/// from design points are always acyclic.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConstraintGraph {
    edges: Vec<(usize, usize)>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl ConstraintGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, IsotonicError> {
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        let mut kept = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(IsotonicError::IndexOutOfRange { index: i.max(j), len: n });
            }
            if i == j || succ[i].contains(&j) {
                continue;
            }
            succ[i].push(j);
            pred[j].push(i);
            kept.push((i, j));
        }
        Ok(Self { edges: kept, succ, pred })
    }

    /// Total order `0 <= 1 <= ... <= n-1`.
    pub fn chain(n: usize) -> Self {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, edges).expect("chain edges are in range")
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn predecessors(&self, i: usize) -> &[usize] {
        &self.pred[i]
    }

    /// If the graph is a single directed path through every node, returns
    /// the nodes in path order.
    pub fn chain_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        if n == 0 {
            return Some(Vec::new());
        }
        if self.edges.len() != n - 1 {
            return None;
        }
        if self.succ.iter().any(|s| s.len() > 1) || self.pred.iter().any(|p| p.len() > 1) {
            return None;
        }
        let start = (0..n).find(|&i| self.pred[i].is_empty())?;
        let mut order = Vec::with_capacity(n);
        let mut cur = start;
        loop {
            order.push(cur);
            match self.succ[cur].first() {
                Some(&next) => cur = next,
                None => break,
            }
            if order.len() > n {
                return None;
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Places `other` after `self`; nodes of `other` are shifted by `self.len()`.
    pub fn disjoint_union(&self, other: &ConstraintGraph) -> ConstraintGraph {
        let off = self.len();
        let edges = self
            .edges
            .iter()
            .copied()
            .chain(other.edges.iter().map(|&(i, j)| (i + off, j + off)))
            .collect();
        ConstraintGraph::new(off + other.len(), edges).expect("shifted edges are in range")
    }

    /// Reflexive-free reachability matrix, row `i` holds every `j` reachable from `i`.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack: Vec<usize> = self.succ[s].clone();
            while let Some(v) = stack.pop() {
                if !row[v] {
                    row[v] = true;
                    stack.extend(self.succ[v].iter().copied());
                }
            }
        }
        reach
    }
}

/// Distinct design points together with the transitive reduction of their
/// componentwise order.
#[derive(Clone, Debug)]
pub struct DesignPoset<T> {
    points: Vec<DesignPoint<T>>,
    graph: ConstraintGraph,
    /// Node indices sorted lexicographically by point.
    sorted: Vec<usize>,
}

/// Builds the poset of `points`; node `i` is `points[i]`.
pub fn build_poset<T: Scalar>(points: Vec<DesignPoint<T>>) -> Result<DesignPoset<T>, IsotonicError> {
    DesignPoset::new(points)
}

impl<T: Scalar> DesignPoset<T> {
    pub fn new(points: Vec<DesignPoint<T>>) -> Result<Self, IsotonicError> {
        let n = points.len();
        if let Some(first) = points.first() {
            let m = first.dim();
            if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.dim() != m) {
                return Err(IsotonicError::DimensionMismatch { expected: m, found: p.dim(), index });
            }
        }
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by(|&a, &b| points[a].lex_cmp(&points[b]).then(a.cmp(&b)));
        for w in sorted.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(IsotonicError::DuplicateDesignPoint { first: w[0].min(w[1]), second: w[0].max(w[1]) });
            }
        }

        let one_dim = points.first().is_some_and(|p| p.dim() == 1);
        let edges = if one_dim {
            sorted.windows(2).map(|w| (w[0], w[1])).collect()
        } else {
            reduced_dominance_edges(&points, &sorted)
        };
        let graph = ConstraintGraph::new(n, edges)?;
        Ok(Self { points, graph, sorted })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(DesignPoint::dim)
    }

    pub fn points(&self) -> &[DesignPoint<T>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &DesignPoint<T> {
        &self.points[i]
    }

    pub fn graph(&self) -> &ConstraintGraph {
        &self.graph
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.graph.edges()
    }

    /// Node indices in lexicographic order of their points.
    pub fn sorted_indices(&self) -> &[usize] {
        &self.sorted
    }

    pub fn index_of(&self, z: &DesignPoint<T>) -> Option<usize> {
        self.sorted
            .binary_search_by(|&i| self.points[i].lex_cmp(z))
            .ok()
            .map(|pos| self.sorted[pos])
    }

    /// `true` when node `i` precedes node `j` in the full order (`i != j`).
    pub fn precedes(&self, i: usize, j: usize) -> bool {
        i != j && self.points[i].precedes(&self.points[j])
    }

    /// Sub-poset on `keep` (indices into `self`); node `r` of the result is
    /// `keep[r]`.
    pub fn induced(&self, keep: &[usize]) -> Result<DesignPoset<T>, IsotonicError> {
        DesignPoset::new(keep.iter().map(|&i| self.points[i].clone()).collect())
    }
}

/// Transitive reduction of componentwise dominance. `order` must be a linear
/// extension (lexicographic order is one).
fn reduced_dominance_edges<T: Scalar>(points: &[DesignPoint<T>], order: &[usize]) -> Vec<(usize, usize)> {
    let n = points.len();
    let words = n.div_ceil(64);
    // ancestors[r] is indexed by rank in `order`.
    let mut ancestors = vec![vec![0u64; words]; n];
    let mut covered = vec![0u64; words];
    let mut edges = Vec::new();
    for rj in 0..n {
        let j = order[rj];
        covered.iter_mut().for_each(|w| *w = 0);
        for ri in (0..rj).rev() {
            if covered[ri / 64] >> (ri % 64) & 1 == 1 {
                continue;
            }
            let i = order[ri];
            if points[i].precedes(&points[j]) {
                edges.push((i, j));
                for (c, a) in covered.iter_mut().zip(&ancestors[ri]) {
                    *c |= *a;
                }
                covered[ri / 64] |= 1 << (ri % 64);
            }
        }
        ancestors[rj].copy_from_slice(&covered);
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[&[f64]]) -> Vec<DesignPoint<f64>> {
        raw.iter().map(|c| DesignPoint::new(c.to_vec()).unwrap()).collect()
    }

    #[test]
    fn line_points_form_a_chain() {
        let poset = build_poset(pts(&[&[0.1], &[0.2], &[0.3]])).unwrap();
        assert_eq!(poset.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn unsorted_line_points() {
        let poset = build_poset(pts(&[&[0.3], &[0.1], &[0.2]])).unwrap();
        assert_eq!(poset.graph().chain_order().unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn incomparable_corners() {
        let poset = build_poset(pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        let mut edges = poset.edges().to_vec();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn diagonal_and_corner_reachability() {
        let poset = build_poset(pts(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], &[0.0, 2.0]])).unwrap();
        let reach = poset.graph().reachability();
        let mut pairs = Vec::new();
        for (i, row) in reach.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r {
                    pairs.push((i, j));
                }
            }
        }
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (3, 2)]);
        // (0,2) must not be stored directly: it is implied.
        assert!(!poset.edges().contains(&(0, 2)));
    }

    #[test]
    fn duplicates_rejected() {
        let err = build_poset(pts(&[&[1.0, 2.0], &[0.0, 0.0], &[1.0, 2.0]])).unwrap_err();
        assert_eq!(err, IsotonicError::DuplicateDesignPoint { first: 0, second: 2 });
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let err = build_poset(pts(&[&[1.0, 2.0], &[0.0]])).unwrap_err();
        assert!(matches!(err, IsotonicError::DimensionMismatch { index: 1, .. }));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(DesignPoint::new(vec![f64::NAN]).is_err());
        assert!(DesignPoint::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn index_lookup() {
        let poset = build_poset(pts(&[&[2.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]])).unwrap();
        let z = DesignPoint::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(poset.index_of(&z), Some(2));
        assert_eq!(poset.index_of(&DesignPoint::new(vec![5.0, 5.0]).unwrap()), None);
    }

    #[test]
    fn chain_order_rejects_branches() {
        let g = ConstraintGraph::new(3, vec![(0, 1), (0, 2)]).unwrap();
        assert!(g.chain_order().is_none());
        let g = ConstraintGraph::new(3, vec![(2, 0), (0, 1)]).unwrap();
        assert_eq!(g.chain_order().unwrap(), vec![2, 0, 1]);
    }
}
