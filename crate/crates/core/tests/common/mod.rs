//! Shared helpers for integration tests: a dense simplex LP solver used as
//! an independent oracle, and random instance generators.

#![allow(dead_code)]

use otlimits::{Measure, MetricSpace, WeightedTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coef: Vec<f64>,
    pub rel: Rel,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> f64 {
        match self {
            LpOutcome::Optimal { value, .. } => *value,
            other => panic!("LP not solved to optimality: {other:?}"),
        }
    }
}

struct Tableau {
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximises `cost . x` over allowed columns with Bland's rule.
    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j] - (0..self.a.len()).map(|i| cost[self.basis[i]] * self.a[i][j]).sum::<f64>();
                if reduced > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                if self.a[i][j] > EPS {
                    let ratio = self.rhs(i) / self.a[i][j];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((i, _)) => self.pivot(i, j),
            }
        }
    }
}

/// Maximises `c . x` subject to `rows` and `x >= 0`, by the two-phase
/// tableau simplex method with Bland's anti-cycling rule.
pub fn maximize(c: &[f64], rows: &[Row]) -> LpOutcome {
    let n = c.len();
    let m = rows.len();
    let mut rows: Vec<Row> = rows.to_vec();
    for row in rows.iter_mut() {
        assert_eq!(row.coef.len(), n);
        if row.rhs < 0.0 {
            row.coef.iter_mut().for_each(|v| *v = -*v);
            row.rhs = -row.rhs;
            row.rel = match row.rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }
    let slacks = rows.iter().filter(|r| r.rel != Rel::Eq).count();
    let artificials = rows.iter().filter(|r| r.rel != Rel::Le).count();
    let cols = n + slacks + artificials;
    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let (mut s, mut art) = (n, n + slacks);
    for (i, row) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(&row.coef);
        a[i][cols] = row.rhs;
        match row.rel {
            Rel::Le => {
                a[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Rel::Ge => {
                a[i][s] = -1.0;
                s += 1;
                a[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
            Rel::Eq => {
                a[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
    }
    let mut t = Tableau { a, basis, cols };
    let is_art = |j: usize| j >= n + slacks && j < cols;

    if artificials > 0 {
        let phase1: Vec<f64> = (0..cols).map(|j| if is_art(j) { -1.0 } else { 0.0 }).collect();
        t.run(&phase1, &vec![true; cols]);
        let infeas: f64 = (0..m).filter(|&i| is_art(t.basis[i])).map(|i| t.rhs(i)).sum();
        if infeas > 1e-8 {
            return LpOutcome::Infeasible;
        }
        let mut i = 0;
        while i < t.a.len() {
            if is_art(t.basis[i]) {
                match (0..n + slacks).find(|&j| t.a[i][j].abs() > 1e-9) {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.a.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art(j)).collect();
    if !t.run(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i);
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { value, x }
}

pub fn cost_matrix(d: &[Vec<f64>], p: f64) -> Vec<Vec<f64>> {
    d.iter().map(|row| row.iter().map(|&v| if v == 0.0 { 0.0 } else { v.powf(p) }).collect()).collect()
}

/// `min sum c_xy w_xy` over couplings of `r` and `s`.
pub fn lp_transport_cost(c: &[Vec<f64>], r: &[f64], s: &[f64]) -> f64 {
    let n = r.len();
    let obj: Vec<f64> = (0..n * n).map(|k| -c[k / n][k % n]).collect();
    let mut rows = Vec::new();
    for x in 0..n {
        let mut coef = vec![0.0; n * n];
        (0..n).for_each(|y| coef[x * n + y] = 1.0);
        rows.push(Row { coef, rel: Rel::Eq, rhs: r[x] });
    }
    for y in 0..n {
        let mut coef = vec![0.0; n * n];
        (0..n).for_each(|x| coef[x * n + y] = 1.0);
        rows.push(Row { coef, rel: Rel::Eq, rhs: s[y] });
    }
    -maximize(&obj, &rows).value()
}

/// Free variables `v` encoded as `v = x[2k] - x[2k + 1]`.
fn free_coef(n_free: usize, terms: &[(usize, f64)]) -> Vec<f64> {
    let mut coef = vec![0.0; 2 * n_free];
    for &(k, v) in terms {
        coef[2 * k] += v;
        coef[2 * k + 1] -= v;
    }
    coef
}

/// `max <g, lambda>` over `lambda_x - lambda_y <= c_xy`, with `lambda_0 = 0`.
pub fn lp_limit_flow(c: &[Vec<f64>], g: &[f64]) -> f64 {
    let n = g.len();
    let obj = free_coef(n, &g.iter().copied().enumerate().collect::<Vec<_>>());
    let mut rows = vec![Row { coef: free_coef(n, &[(0, 1.0)]), rel: Rel::Eq, rhs: 0.0 }];
    for x in 0..n {
        for y in 0..n {
            if x != y {
                rows.push(Row { coef: free_coef(n, &[(x, 1.0), (y, -1.0)]), rel: Rel::Le, rhs: c[x][y] });
            }
        }
    }
    maximize(&obj, &rows).value()
}

/// `max wg <g, lambda> + wh <h, mu>` over `lambda_x + mu_y <= c_xy`, with
/// equality on `tight` pairs.
pub fn lp_face_max(c: &[Vec<f64>], tight: &[(usize, usize)], g: &[f64], h: &[f64], wg: f64, wh: f64) -> f64 {
    let n = g.len();
    let mut terms: Vec<(usize, f64)> = g.iter().enumerate().map(|(x, &v)| (x, wg * v)).collect();
    terms.extend(h.iter().enumerate().map(|(y, &v)| (n + y, wh * v)));
    let obj = free_coef(2 * n, &terms);
    let mut rows = vec![Row { coef: free_coef(2 * n, &[(0, 1.0)]), rel: Rel::Eq, rhs: 0.0 }];
    for x in 0..n {
        for y in 0..n {
            let rel = if tight.contains(&(x, y)) { Rel::Eq } else { Rel::Le };
            rows.push(Row { coef: free_coef(2 * n, &[(x, 1.0), (n + y, 1.0)]), rel, rhs: c[x][y] });
        }
    }
    maximize(&obj, &rows).value()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> MetricSpace {
    let points = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    MetricSpace::from_coordinates(points).unwrap()
}

/// A random probability vector with every entry positive.
pub fn random_probability(rng: &mut impl Rng, n: usize) -> Measure {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Measure::from_weights(&w).unwrap()
}

/// A random probability vector supported on a random subset.
pub fn random_sparse_probability(rng: &mut impl Rng, n: usize, keep: f64) -> Measure {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < keep { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    Measure::from_weights(&w).unwrap()
}

/// A random vector with entries summing to zero (up to rounding).
pub fn random_centered(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let total: f64 = u.iter().sum();
    u[n - 1] -= total;
    u
}

/// A random rooted tree on `n` nodes with weights in `[0.1, 1)`; node 0 is
/// the root and every other node hangs off an earlier one.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> WeightedTree {
    let mut parent = vec![0];
    let mut weight = vec![0.0];
    for x in 1..n {
        parent.push(rng.random_range(0..x));
        weight.push(rng.random_range(0.1..1.0));
    }
    WeightedTree::new(parent, weight).unwrap()
}

/// Every labelled tree on `n >= 2` nodes as an edge list, via Prüfer codes.
pub fn all_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    let total = n.pow(n as u32 - 2);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..n - 2)
                .map(|_| {
                    let v = code % n;
                    code /= n;
                    v
                })
                .collect();
            prufer_edges(&seq, n)
        })
        .collect()
}

fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Optimal `(lambda, mu)` of `max <r, lambda> + <s, mu>` over
/// `lambda_x + mu_y <= c_xy`, with `lambda_0 = 0`.
pub fn lp_transport_dual(c: &[Vec<f64>], r: &[f64], s: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = r.len();
    let mut terms: Vec<(usize, f64)> = r.iter().copied().enumerate().collect();
    terms.extend(s.iter().enumerate().map(|(y, &v)| (n + y, v)));
    let obj = free_coef(2 * n, &terms);
    let mut rows = vec![Row { coef: free_coef(2 * n, &[(0, 1.0)]), rel: Rel::Eq, rhs: 0.0 }];
    for x in 0..n {
        for y in 0..n {
            rows.push(Row { coef: free_coef(2 * n, &[(x, 1.0), (n + y, 1.0)]), rel: Rel::Le, rhs: c[x][y] });
        }
    }
    match maximize(&obj, &rows) {
        LpOutcome::Optimal { value, x } => {
            let v: Vec<f64> = (0..2 * n).map(|k| x[2 * k] - x[2 * k + 1]).collect();
            (value, v[..n].to_vec(), v[n..].to_vec())
        }
        other => panic!("dual LP not solved: {other:?}"),
    }
}
