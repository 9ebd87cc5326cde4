use super::partition::solve_dag;
use super::pava::pava;
use super::poset::ConstraintGraph;
use super::IsotonicError;
use crate::scalar::Scalar;

/// Weighted least-squares isotonic regression over a constraint graph,
/// optionally with groups of nodes forced to share one value.
#[derive(Clone, Debug)]
pub struct IsotonicProblem<T> {
    graph: ConstraintGraph,
    targets: Vec<T>,
    weights: Vec<T>,
    merges: Vec<Vec<usize>>,
}

impl<T: Scalar> IsotonicProblem<T> {
    pub fn new(graph: ConstraintGraph, targets: Vec<T>, weights: Vec<T>) -> Result<Self, IsotonicError> {
        let n = graph.len();
        if targets.len() != n {
            return Err(IsotonicError::LengthMismatch { what: "targets", expected: n, found: targets.len() });
        }
        if weights.len() != n {
            return Err(IsotonicError::LengthMismatch { what: "weights", expected: n, found: weights.len() });
        }
        if targets.iter().any(|y| !y.is_finite_value()) {
            return Err(IsotonicError::NonFinite("target"));
        }
        if weights.iter().any(|w| !w.is_finite_value() || *w < T::zero()) {
            return Err(IsotonicError::NegativeWeight);
        }
        Ok(Self { graph, targets, weights, merges: Vec::new() })
    }

    /// Chain problem `0 <= 1 <= ... <= n-1`.
    pub fn chain(targets: Vec<T>, weights: Vec<T>) -> Result<Self, IsotonicError> {
        Self::new(ConstraintGraph::chain(targets.len()), targets, weights)
    }

    /// Forces every node in `set` to share one fitted value.
    pub fn with_merge(mut self, set: Vec<usize>) -> Result<Self, IsotonicError> {
        if set.is_empty() {
            return Err(IsotonicError::InvalidMerge("empty merge set"));
        }
        let n = self.graph.len();
        if let Some(&bad) = set.iter().find(|&&i| i >= n) {
            return Err(IsotonicError::IndexOutOfRange { index: bad, len: n });
        }
        let mut sorted = set.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != set.len() || self.merges.iter().flatten().any(|i| sorted.binary_search(i).is_ok()) {
            return Err(IsotonicError::InvalidMerge("merge sets must be disjoint"));
        }
        self.merges.push(set);
        Ok(self)
    }

    pub fn graph(&self) -> &ConstraintGraph {
        &self.graph
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn merges(&self) -> &[Vec<usize>] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Weighted squared error of `values` (nodes with `None` are skipped).
    pub fn objective_of(&self, values: &[Option<T>]) -> T {
        let mut total = T::zero();
        for ((v, y), w) in values.iter().zip(&self.targets).zip(&self.weights) {
            if let Some(v) = v {
                let r = y.clone() - v.clone();
                total = total + w.clone() * r.clone() * r;
            }
        }
        total
    }
}

/// Fitted values of an [`IsotonicProblem`].
#[derive(Clone, Debug)]
pub struct IsotonicSolution<T> {
    /// `None` for zero-weight nodes that carry no constraint information.
    pub values: Vec<Option<T>>,
    pub objective: T,
    /// Groups of nodes sharing one fitted value, in increasing value order.
    pub level_sets: Vec<Vec<usize>>,
}

impl<T: Scalar> IsotonicSolution<T> {
    fn from_values(problem: &IsotonicProblem<T>, values: Vec<Option<T>>) -> Self {
        let objective = problem.objective_of(&values);
        let mut assigned: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
        assigned.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .expect("fitted values are finite")
                .then(a.cmp(&b))
        });
        let mut level_sets: Vec<Vec<usize>> = Vec::new();
        for i in assigned {
            match level_sets.last_mut() {
                Some(last) if values[last[0]] == values[i] => last.push(i),
                _ => level_sets.push(vec![i]),
            }
        }
        Self { values, objective, level_sets }
    }

    pub fn value(&self, i: usize) -> Option<&T> {
        self.values[i].as_ref()
    }

    /// Number of distinct fitted values.
    pub fn distinct_levels(&self) -> usize {
        self.level_sets.len()
    }

    /// All values, panicking if any node was left unfitted.
    pub fn dense(&self) -> Vec<T> {
        self.values
            .iter()
            .map(|v| v.clone().expect("node has a fitted value"))
            .collect()
    }
}

/// Pool-adjacent-violators on a chain. Requires a path graph, positive
/// weights and no merges.
pub fn solve_chain<T: Scalar>(problem: &IsotonicProblem<T>) -> Result<IsotonicSolution<T>, IsotonicError> {
    let order = problem.graph.chain_order().ok_or(IsotonicError::NotAChain)?;
    if !problem.merges.is_empty() {
        return Err(IsotonicError::NotAChain);
    }
    if problem.weights.iter().any(|w| *w <= T::zero()) {
        return Err(IsotonicError::NonPositiveChainWeight);
    }
    let y: Vec<T> = order.iter().map(|&i| problem.targets[i].clone()).collect();
    let w: Vec<T> = order.iter().map(|&i| problem.weights[i].clone()).collect();
    let fitted = pava(&y, &w);
    let mut values = vec![None; problem.len()];
    for (&i, v) in order.iter().zip(fitted) {
        values[i] = Some(v);
    }
    Ok(IsotonicSolution::from_values(problem, values))
}

/// Exact solver for any problem: merges and cycles are contracted, unmerged
/// zero-weight nodes are dropped (order through them is preserved), and each
/// connected component is solved by PAVA when it is a chain or by recursive
/// partitioning otherwise.
pub fn solve_partial_order<T: Scalar>(problem: &IsotonicProblem<T>) -> Result<IsotonicSolution<T>, IsotonicError> {
    let n = problem.len();
    if n == 0 {
        return Err(IsotonicError::NoActiveNodes);
    }

    // Merge groups.
    let mut dsu = Dsu::new(n);
    for set in &problem.merges {
        for w in set.windows(2) {
            dsu.union(w[0], w[1]);
        }
    }
    let (group_of, n_groups) = dsu.labels();
    let mut group_edges: Vec<(usize, usize)> = problem
        .graph
        .edges()
        .iter()
        .map(|&(i, j)| (group_of[i], group_of[j]))
        .filter(|(a, b)| a != b)
        .collect();
    group_edges.sort_unstable();
    group_edges.dedup();

    // Cycles force equality.
    let scc = strongly_connected(n_groups, &group_edges);
    let (super_of_group, n_super) = scc;
    let super_of: Vec<usize> = group_of.iter().map(|&g| super_of_group[g]).collect();
    let mut super_edges: Vec<(usize, usize)> = group_edges
        .iter()
        .map(|&(a, b)| (super_of_group[a], super_of_group[b]))
        .filter(|(a, b)| a != b)
        .collect();
    super_edges.sort_unstable();
    super_edges.dedup();

    let mut sw = vec![T::zero(); n_super];
    let mut swy = vec![T::zero(); n_super];
    for i in 0..n {
        let s = super_of[i];
        sw[s] = sw[s].clone() + problem.weights[i].clone();
        swy[s] = swy[s].clone() + problem.weights[i].clone() * problem.targets[i].clone();
    }
    let active: Vec<bool> = sw.iter().map(|w| *w > T::zero()).collect();
    if !active.iter().any(|&a| a) {
        return Err(IsotonicError::NoActiveNodes);
    }

    // Compact indices for active supernodes and edges bridged across inactive ones.
    let mut compact = vec![usize::MAX; n_super];
    let mut members = Vec::new();
    for s in 0..n_super {
        if active[s] {
            compact[s] = members.len();
            members.push(s);
        }
    }
    let mut succ_all = vec![Vec::new(); n_super];
    for &(a, b) in &super_edges {
        succ_all[a].push(b);
    }
    let m = members.len();
    let mut succ = vec![Vec::new(); m];
    let any_inactive = m < n_super;
    for (c, &s) in members.iter().enumerate() {
        if !any_inactive {
            succ[c] = succ_all[s].iter().map(|&b| compact[b]).collect();
            continue;
        }
        let mut seen = vec![false; n_super];
        let mut stack: Vec<usize> = succ_all[s].clone();
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if active[v] {
                succ[c].push(compact[v]);
            } else {
                stack.extend(succ_all[v].iter().copied());
            }
        }
    }

    let targets: Vec<T> = members.iter().map(|&s| swy[s].clone() / sw[s].clone()).collect();
    let weights: Vec<T> = members.iter().map(|&s| sw[s].clone()).collect();
    let fitted = solve_components(&succ, &targets, &weights);

    let values = (0..n)
        .map(|i| {
            let c = compact[super_of[i]];
            (c != usize::MAX).then(|| fitted[c].clone())
        })
        .collect();
    Ok(IsotonicSolution::from_values(problem, values))
}

fn solve_components<T: Scalar>(succ: &[Vec<usize>], targets: &[T], weights: &[T]) -> Vec<T> {
    let m = targets.len();
    let mut dsu = Dsu::new(m);
    for (a, s) in succ.iter().enumerate() {
        for &b in s {
            dsu.union(a, b);
        }
    }
    let (label, count) = dsu.labels();
    let mut comps: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in label.iter().enumerate() {
        comps[l].push(i);
    }

    let mut out = vec![T::zero(); m];
    let mut local = vec![usize::MAX; m];
    for comp in comps {
        for (r, &i) in comp.iter().enumerate() {
            local[i] = r;
        }
        let sub_succ: Vec<Vec<usize>> = comp.iter().map(|&i| succ[i].iter().map(|&j| local[j]).collect()).collect();
        let y: Vec<T> = comp.iter().map(|&i| targets[i].clone()).collect();
        let w: Vec<T> = comp.iter().map(|&i| weights[i].clone()).collect();
        let fitted = match path_order(&sub_succ) {
            Some(order) => {
                let yo: Vec<T> = order.iter().map(|&r| y[r].clone()).collect();
                let wo: Vec<T> = order.iter().map(|&r| w[r].clone()).collect();
                let fo = pava(&yo, &wo);
                let mut f = vec![T::zero(); comp.len()];
                for (&r, v) in order.iter().zip(fo) {
                    f[r] = v;
                }
                f
            }
            None => solve_dag(&sub_succ, &y, &w),
        };
        for (&i, v) in comp.iter().zip(fitted) {
            out[i] = v;
        }
    }
    out
}

/// Path order of a connected component, if it is a simple directed path.
fn path_order(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut indeg = vec![0usize; n];
    let mut edges = 0;
    for s in succ {
        if s.len() > 1 {
            return None;
        }
        for &j in s {
            indeg[j] += 1;
            edges += 1;
        }
    }
    if edges + 1 != n || indeg.iter().any(|&d| d > 1) {
        return None;
    }
    let mut cur = (0..n).find(|&i| indeg[i] == 0)?;
    let mut order = vec![cur];
    while let Some(&next) = succ[cur].first() {
        order.push(next);
        cur = next;
    }
    (order.len() == n).then_some(order)
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense labels `0..count` in order of first appearance.
    fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            out[i] = map[r];
        }
        (out, count)
    }
}

/// Kosaraju; returns the component label of every node and the number of components.
fn strongly_connected(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, usize) {
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for &(a, b) in edges {
        succ[a].push(b);
        pred[b].push(a);
    }
    let mut visited = vec![false; n];
    let mut finish = Vec::with_capacity(n);
    for s in 0..n {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut stack = vec![(s, 0usize)];
        while let Some((v, k)) = stack.pop() {
            if k < succ[v].len() {
                stack.push((v, k + 1));
                let w = succ[v][k];
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            } else {
                finish.push(v);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    for &s in finish.iter().rev() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = count;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &pred[v] {
                if label[w] == usize::MAX {
                    label[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    (label, count)
}
