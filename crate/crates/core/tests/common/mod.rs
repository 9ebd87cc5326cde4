//! Brute-force reference solvers shared by the integration tests.
#![allow(dead_code)]

use isofuse::isotonic::{build_poset, ConstraintGraph, DesignPoint, IsotonicProblem};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// A small isotonic problem with exactly representable data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: ConstraintGraph,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub merges: Vec<Vec<usize>>,
    pub label: &'static str,
}

impl Instance {
    pub fn problem_f64(&self) -> IsotonicProblem<f64> {
        let mut p = IsotonicProblem::new(self.graph.clone(), self.targets.clone(), self.weights.clone()).unwrap();
        for m in &self.merges {
            p = p.with_merge(m.clone()).unwrap();
        }
        p
    }

    pub fn problem_exact(&self) -> IsotonicProblem<BigRational> {
        let y = self.targets.iter().map(|&v| rat(v)).collect();
        let w = self.weights.iter().map(|&v| rat(v)).collect();
        let mut p = IsotonicProblem::new(self.graph.clone(), y, w).unwrap();
        for m in &self.merges {
            p = p.with_merge(m.clone()).unwrap();
        }
        p
    }
}

/// Draws a chain (n <= 6) or a 2-D grid poset (n <= 5). `variant` 1 adds
/// one merge of two positive-weight nodes, `variant` 2 zeroes one weight.
pub fn random_instance<R: Rng>(rng: &mut R, variant: u8) -> Instance {
    let two_d = rng.random_bool(0.5);
    let (graph, n) = if two_d {
        let n = rng.random_range(1..=5);
        let mut pts: Vec<(i32, i32)> = Vec::new();
        while pts.len() < n {
            let p = (rng.random_range(0..4), rng.random_range(0..4));
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        let points = pts
            .iter()
            .map(|&(a, b)| DesignPoint::new(vec![a as f64, b as f64]).unwrap())
            .collect();
        (build_poset(points).unwrap().graph().clone(), n)
    } else {
        let n = rng.random_range(1..=6);
        (ConstraintGraph::chain(n), n)
    };
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-20..=20) as f64 / 4.0).collect();
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random_range(1..=8) as f64 / 2.0).collect();
    let mut merges = Vec::new();
    let label = match variant {
        1 if n >= 2 => {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n);
            while b == a {
                b = rng.random_range(0..n);
            }
            merges.push(vec![a, b]);
            "merge"
        }
        2 if n >= 2 => {
            weights[rng.random_range(0..n)] = 0.0;
            "zero-weight"
        }
        _ => "plain",
    };
    let label = if two_d { match label { "merge" => "2d-merge", "zero-weight" => "2d-zero-weight", _ => "2d" } } else { label };
    Instance { graph, targets, weights, merges, label }
}

fn reach_with_merges(inst: &Instance) -> Vec<Vec<bool>> {
    let n = inst.graph.len();
    let mut edges = inst.graph.edges().to_vec();
    for m in &inst.merges {
        for w in m.windows(2) {
            edges.push((w[0], w[1]));
            edges.push((w[1], w[0]));
        }
    }
    ConstraintGraph::new(n, edges).unwrap().reachability()
}

/// Minimum objective over every partition of the positive-weight nodes into
/// level sets valued at their weighted means, subject to the order
/// (including order implied through zero-weight nodes and merges).
pub fn level_set_oracle(inst: &Instance) -> BigRational {
    let n = inst.graph.len();
    let reach = reach_with_merges(inst);
    let y: Vec<BigRational> = inst.targets.iter().map(|&v| rat(v)).collect();
    let w: Vec<BigRational> = inst.weights.iter().map(|&v| rat(v)).collect();
    let live: Vec<usize> = (0..n).filter(|&i| inst.weights[i] > 0.0).collect();
    // Merged nodes must share a block.
    let mut unit_of = vec![usize::MAX; n];
    let mut units: Vec<Vec<usize>> = Vec::new();
    for &i in &live {
        if unit_of[i] != usize::MAX {
            continue;
        }
        let u = units.len();
        let mut members = vec![i];
        for m in &inst.merges {
            if m.contains(&i) {
                members.extend(m.iter().copied().filter(|&j| j != i && inst.weights[j] > 0.0));
            }
        }
        for &j in &members {
            unit_of[j] = u;
        }
        units.push(members);
    }
    let mut best: Option<BigRational> = None;
    let mut labels = vec![0usize; units.len()];
    enumerate_partitions(&mut labels, 0, 0, &mut |labels| {
        let blocks = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sw = vec![BigRational::zero(); blocks];
        let mut sy = vec![BigRational::zero(); blocks];
        for (u, members) in units.iter().enumerate() {
            for &i in members {
                sw[labels[u]] += &w[i];
                sy[labels[u]] += &w[i] * &y[i];
            }
        }
        let val: Vec<BigRational> = (0..blocks).map(|b| &sy[b] / &sw[b]).collect();
        let value = |i: usize| &val[labels[unit_of[i]]];
        for &a in &live {
            for &b in &live {
                if reach[a][b] && value(a) > value(b) {
                    return;
                }
            }
        }
        let mut obj = BigRational::zero();
        for &i in &live {
            let r = &y[i] - value(i);
            obj += &w[i] * &r * &r;
        }
        if best.as_ref().is_none_or(|b| obj < *b) {
            best = Some(obj);
        }
    });
    best.unwrap_or_else(BigRational::zero)
}

fn enumerate_partitions(labels: &mut Vec<usize>, pos: usize, used: usize, f: &mut impl FnMut(&[usize])) {
    if pos == labels.len() {
        f(labels);
        return;
    }
    for l in 0..=used {
        labels[pos] = l;
        enumerate_partitions(labels, pos + 1, used.max(l + 1), f);
    }
}

/// `true` when `values` respect every order relation among fitted nodes.
pub fn is_feasible(inst: &Instance, values: &[Option<f64>], slack: f64) -> bool {
    let reach = reach_with_merges(inst);
    let n = values.len();
    (0..n).all(|a| {
        (0..n).all(|b| match (values[a], values[b]) {
            (Some(va), Some(vb)) if reach[a][b] => va <= vb + slack,
            _ => true,
        })
    })
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Minimiser of `sum_k sum_i w[k][i] (x_ki - y[k][i])^2 + sum_i v[i] (x_0i - x_1i)^2`
/// with each `x_k` non-decreasing along a chain, found by trying every set
/// of active chain constraints.
pub fn two_chain_oracle(y: &[Vec<f64>; 2], w: &[Vec<f64>; 2], v: &[f64]) -> [Vec<f64>; 2] {
    let n = v.len();
    let gaps = n.saturating_sub(1);
    let mut best: Option<(f64, [Vec<f64>; 2])> = None;
    for m0 in 0u32..(1 << gaps) {
        for m1 in 0u32..(1 << gaps) {
            // Group consecutive nodes joined by an active constraint.
            let group = |mask: u32| {
                let mut g = vec![0usize; n];
                for i in 1..n {
                    g[i] = g[i - 1] + usize::from(mask >> (i - 1) & 1 == 0);
                }
                g
            };
            let g = [group(m0), group(m1)];
            let sizes = [g[0][n - 1] + 1, g[1][n - 1] + 1];
            let dim = sizes[0] + sizes[1];
            let var = |k: usize, i: usize| if k == 0 { g[0][i] } else { sizes[0] + g[1][i] };
            let mut a = vec![vec![0.0; dim]; dim];
            let mut b = vec![0.0; dim];
            for k in 0..2 {
                for i in 0..n {
                    let r = var(k, i);
                    a[r][r] += w[k][i];
                    b[r] += w[k][i] * y[k][i];
                }
            }
            for i in 0..n {
                let (p, q) = (var(0, i), var(1, i));
                a[p][p] += v[i];
                a[q][q] += v[i];
                a[p][q] -= v[i];
                a[q][p] -= v[i];
            }
            let Some(x) = solve_linear(a, b) else { continue };
            let vals = [
                (0..n).map(|i| x[var(0, i)]).collect::<Vec<_>>(),
                (0..n).map(|i| x[var(1, i)]).collect::<Vec<_>>(),
            ];
            if vals.iter().any(|f| f.windows(2).any(|p| p[0] > p[1] + 1e-10)) {
                continue;
            }
            let mut obj = 0.0;
            for k in 0..2 {
                for i in 0..n {
                    obj += w[k][i] * (vals[k][i] - y[k][i]).powi(2);
                }
            }
            for i in 0..n {
                obj += v[i] * (vals[0][i] - vals[1][i]).powi(2);
            }
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, vals));
            }
        }
    }
    best.expect("the all-equal active set is always feasible").1
}
