//! Isotonic recursive partitioning for general partial orders.
//!
//! A block with weighted mean `m` is split into the upper set `U` that
//! maximises `sum_{i in U} w_i (y_i - m)` and its complement. The optimal
//! upper set is a maximum-weight closure, found as a minimum s-t cut. The
//! fitted values on `U` are all `>= m` and on the complement all `<= m`, so
//! the two halves can be solved independently. A block with no improving
//! upper set is a level set.

use crate::scalar::Scalar;

/// Solves weighted isotonic least squares on nodes `0..n` with successor
/// lists `succ`. Weights must be positive; cycles in `succ` must already be
/// contracted. Returns one value per node.
pub(crate) fn solve_dag<T: Scalar>(succ: &[Vec<usize>], targets: &[T], weights: &[T]) -> Vec<T> {
    let n = targets.len();
    let mut values: Vec<Option<T>> = vec![None; n];
    let mut local = vec![usize::MAX; n];
    let mut stack: Vec<Vec<usize>> = vec![(0..n).collect()];

    while let Some(block) = stack.pop() {
        if block.len() == 1 {
            values[block[0]] = Some(targets[block[0]].clone());
            continue;
        }
        for (r, &i) in block.iter().enumerate() {
            local[i] = r;
        }

        // Targets already respecting every internal edge are their own fit.
        let feasible = block
            .iter()
            .all(|&i| succ[i].iter().all(|&j| local[j] == usize::MAX || targets[i] <= targets[j]));
        if feasible {
            for &i in &block {
                values[i] = Some(targets[i].clone());
            }
            reset(&mut local, &block);
            continue;
        }

        let mut sw = T::zero();
        let mut swy = T::zero();
        for &i in &block {
            sw = sw + weights[i].clone();
            swy = swy + weights[i].clone() * targets[i].clone();
        }
        let mean = swy / sw;
        let excess: Vec<T> = block.iter().map(|&i| weights[i].clone() * (targets[i].clone() - mean.clone())).collect();

        match best_upper_set(&block, &local, succ, &excess) {
            Some(upper) => {
                let mut hi = Vec::new();
                let mut lo = Vec::new();
                for (r, &i) in block.iter().enumerate() {
                    if upper[r] {
                        hi.push(i);
                    } else {
                        lo.push(i);
                    }
                }
                reset(&mut local, &block);
                stack.push(lo);
                stack.push(hi);
            }
            None => {
                for &i in &block {
                    values[i] = Some(mean.clone());
                }
                reset(&mut local, &block);
            }
        }
    }

    values.into_iter().map(|v| v.expect("every node is assigned")).collect()
}

fn reset(local: &mut [usize], block: &[usize]) {
    for &i in block {
        local[i] = usize::MAX;
    }
}

/// Maximum-gain proper non-empty upper set of `block`, or `None` when no
/// upper set has positive gain.
fn best_upper_set<T: Scalar>(block: &[usize], local: &[usize], succ: &[Vec<usize>], excess: &[T]) -> Option<Vec<bool>> {
    let nb = block.len();
    let source = nb;
    let sink = nb + 1;
    let mut positive = T::zero();
    let mut scale = T::zero();
    for c in excess {
        scale = scale + c.magnitude();
        if *c > T::zero() {
            positive = positive + c.clone();
        }
    }
    if scale == T::zero() {
        return None;
    }
    let slack = T::relative_slack() * scale;
    let infinite = positive.clone() + T::one();

    let mut net = FlowNetwork::new(nb + 2);
    for (r, c) in excess.iter().enumerate() {
        if *c > T::zero() {
            net.add_edge(source, r, c.clone());
        } else if *c < T::zero() {
            net.add_edge(r, sink, T::zero() - c.clone());
        }
    }
    for (r, &i) in block.iter().enumerate() {
        for &j in &succ[i] {
            let rj = local[j];
            if rj != usize::MAX {
                net.add_edge(r, rj, infinite.clone());
            }
        }
    }

    let flow = net.max_flow(source, sink, &slack);
    let gain = positive - flow;
    if gain <= slack {
        return None;
    }
    let reach = net.residual_reach(source, &slack);
    let upper: Vec<bool> = reach[..nb].to_vec();
    let count = upper.iter().filter(|&&u| u).count();
    (count > 0 && count < nb).then_some(upper)
}

/// Dinic max-flow with generic capacities.
struct FlowNetwork<T> {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<T>,
}

impl<T: Scalar> FlowNetwork<T> {
    fn new(n: usize) -> Self {
        Self { head: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: T) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(T::zero());
    }

    fn levels(&self, s: usize, slack: &T) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.head.len()];
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if level[v] == usize::MAX && self.cap[e] > *slack {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn max_flow(&mut self, s: usize, t: usize, slack: &T) -> T {
        let mut total = T::zero();
        loop {
            let level = self.levels(s, slack);
            if level[t] == usize::MAX {
                return total;
            }
            let mut iter = vec![0usize; self.head.len()];
            loop {
                let pushed = self.augment(s, t, &level, &mut iter, slack);
                match pushed {
                    Some(f) => total = total + f,
                    None => break,
                }
            }
        }
    }

    /// Finds one augmenting path in the level graph (iteratively) and pushes
    /// its bottleneck.
    fn augment(&mut self, s: usize, t: usize, level: &[usize], iter: &mut [usize], slack: &T) -> Option<T> {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let mut bottleneck = self.cap[path[0]].clone();
                for &e in &path[1..] {
                    if self.cap[e] < bottleneck {
                        bottleneck = self.cap[e].clone();
                    }
                }
                for &e in &path {
                    self.cap[e] = self.cap[e].clone() - bottleneck.clone();
                    self.cap[e ^ 1] = self.cap[e ^ 1].clone() + bottleneck.clone();
                }
                return Some(bottleneck);
            }
            let mut advanced = false;
            while iter[u] < self.head[u].len() {
                let e = self.head[u][iter[u]];
                let v = self.to[e];
                if self.cap[e] > *slack && level[v] == level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                iter[u] += 1;
            }
            if !advanced {
                // Dead end: retreat and skip the edge that led here.
                match path.pop() {
                    Some(e) => {
                        u = self.to[e ^ 1];
                        iter[u] += 1;
                    }
                    None => return None,
                }
            }
        }
    }

    fn residual_reach(&self, s: usize, slack: &T) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if !seen[v] && self.cap[e] > *slack {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_incomparable_successors() {
        // 0 <= 1, 0 <= 2 with y = (5, 1, 2).
        let succ = vec![vec![1, 2], vec![], vec![]];
        let v: Vec<f64> = solve_dag(&succ, &[5.0, 1.0, 2.0], &[1.0, 1.0, 1.0]);
        for x in &v {
            assert!((x - 8.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_pool() {
        // 0 <= 1, 0 <= 2 with y = (3, 1, 5): pool {0,1} at 2, node 2 stays 5.
        let succ = vec![vec![1, 2], vec![], vec![]];
        let v: Vec<f64> = solve_dag(&succ, &[3.0, 1.0, 5.0], &[1.0, 1.0, 1.0]);
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - 2.0).abs() < 1e-12);
        assert!((v[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn chain_matches_pava() {
        let y: [f64; 6] = [4.0, 1.0, 3.0, 0.5, 6.0, 2.0];
        let w = [1.0, 2.0, 0.5, 1.0, 3.0, 1.0];
        let succ: Vec<Vec<usize>> = (0..6).map(|i| if i < 5 { vec![i + 1] } else { vec![] }).collect();
        let a = solve_dag(&succ, &y, &w);
        let b = super::super::pava::pava(&y, &w);
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}
