//! Rooted weighted trees, the subtree-sum operator and the closed-form
//! limit statistic on tree metrics.
//!
//! For a tree `T` with root `x0`, `(S_T u)_x` is the sum of `u` over the
//! subtree rooted at `x` (including `x`), and
//!
//! ```text
//! Z_T,p(u) = ( sum_{x != root} |(S_T u)_x| * w(x, parent(x))^p )^(1/p).
//! ```
//!
//! On the tree metric `d_T`, `Z^p` is the exact value of
//! [`crate::solver::limit_flow`]; on any space, `Z` for a spanning tree is an
//! upper bound for it.

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::solver::DualPair;
use crate::space::{check_exponent, GridSpace, GroundMetric, MetricSpace};

/// A rooted tree on `0..len` given by parent links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    parent: Vec<usize>,
    /// `w(x, parent(x))`; zero at the root.
    weight: Vec<f64>,
    root: usize,
    /// Breadth-first order from the root: parents before children.
    order: Vec<usize>,
}

impl WeightedTree {
    /// Builds a tree from `parent` (with `parent[root] == root`) and the
    /// weight of the edge from each node to its parent. The root's weight
    /// is ignored.
    pub fn new(parent: Vec<usize>, weight: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(OtError::EmptySpace);
        }
        if weight.len() != n {
            return Err(OtError::DimensionMismatch { expected: n, got: weight.len() });
        }
        if let Some(&bad) = parent.iter().find(|&&q| q >= n) {
            return Err(OtError::IndexOutOfRange { index: bad, len: n });
        }
        let roots: Vec<usize> = (0..n).filter(|&x| parent[x] == x).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(OtError::InvalidTree("no root (parent[x] == x) found".into())),
            _ => return Err(OtError::InvalidTree(format!("{} roots found", roots.len()))),
        };
        for (x, &w) in weight.iter().enumerate() {
            if x != root && (!w.is_finite() || w < 0.0) {
                return Err(OtError::InvalidTree(format!("edge weight {w} at node {x}")));
            }
        }

        let (offsets, kids) = children_csr(&parent, root);
        let mut order = Vec::with_capacity(n);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let x = order[head];
            head += 1;
            order.extend_from_slice(&kids[offsets[x]..offsets[x + 1]]);
        }
        if order.len() != n {
            return Err(OtError::InvalidTree(format!(
                "{} nodes do not reach the root (cycle in parent links)",
                n - order.len()
            )));
        }
        let mut weight = weight;
        weight[root] = 0.0;
        Ok(Self { parent, weight, root, order })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, x: usize) -> usize {
        self.parent[x]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// `w(x, parent(x))`, zero for the root.
    pub fn weight(&self, x: usize) -> f64 {
        self.weight[x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Nodes in breadth-first order from the root.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// `(S_T u)_x`: the sum of `u` over the subtree rooted at `x`.
    pub fn subtree_sums(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "vector length does not match tree size");
        let mut sums = u.to_vec();
        for &x in self.order[1..].iter().rev() {
            sums[self.parent[x]] += sums[x];
        }
        sums
    }

    /// `Z_T,p(u)^p`.
    pub fn z_power(&self, u: &[f64], p: f64) -> f64 {
        let sums = self.subtree_sums(u);
        self.order[1..].iter().map(|&x| sums[x].abs() * edge_cost(self.weight[x], p)).sum()
    }

    /// `Z_T,p(u)`.
    pub fn z_statistic(&self, u: &[f64], p: f64) -> f64 {
        let zp = self.z_power(u, p);
        if p == 1.0 {
            zp
        } else {
            zp.powf(1.0 / p)
        }
    }

    /// A maximiser of `<u, lambda>` over `lambda_x - lambda_y <= d_T(x, y)^p`:
    /// `lambda_root = 0` and `lambda_x = lambda_parent + sign((S_T u)_x) w^p`
    /// with `sign(0) = +1`. Returned as `(lambda, -lambda)`, which is feasible
    /// for the transport dual under `d_T^p`.
    pub fn dual_witness(&self, u: &[f64], p: f64) -> DualPair {
        let sums = self.subtree_sums(u);
        let mut lambda = vec![0.0; self.len()];
        for &x in &self.order[1..] {
            let step = edge_cost(self.weight[x], p);
            let signed = if sums[x] >= 0.0 { step } else { -step };
            lambda[x] = lambda[self.parent[x]] + signed;
        }
        let mu = lambda.iter().map(|l| -l).collect();
        DualPair { lambda, mu }
    }

    /// Distance from every node to the root along the tree.
    pub fn root_distances(&self) -> Vec<f64> {
        let mut depth = vec![0.0; self.len()];
        for &x in &self.order[1..] {
            depth[x] = depth[self.parent[x]] + self.weight[x];
        }
        depth
    }

    /// All path distances `d_T(x, y)`. O(n^2).
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let (offsets, kids) = children_csr(&self.parent, self.root);
        let mut rows = vec![vec![0.0; n]; n];
        let mut stack = Vec::new();
        for (x, row) in rows.iter_mut().enumerate() {
            let mut seen = vec![false; n];
            seen[x] = true;
            stack.push(x);
            while let Some(y) = stack.pop() {
                let up = self.parent[y];
                if up != y && !seen[up] {
                    seen[up] = true;
                    row[up] = row[y] + self.weight[y];
                    stack.push(up);
                }
                for &c in &kids[offsets[y]..offsets[y + 1]] {
                    if !seen[c] {
                        seen[c] = true;
                        row[c] = row[y] + self.weight[c];
                        stack.push(c);
                    }
                }
            }
        }
        rows
    }

    /// The tree metric `d_T` as a [`MetricSpace`] with the root as base
    /// point. Fails when an edge has zero weight, since `d_T` is then only a
    /// pseudometric.
    pub fn metric_space(&self) -> Result<MetricSpace> {
        MetricSpace::from_matrix(self.distance_matrix())?.with_base_point(self.root)
    }
}

fn edge_cost(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else if p == 1.0 {
        w
    } else {
        w.powf(p)
    }
}

fn children_csr(parent: &[usize], root: usize) -> (Vec<usize>, Vec<usize>) {
    let n = parent.len();
    let mut offsets = vec![0usize; n + 1];
    for (x, &q) in parent.iter().enumerate() {
        if x != root {
            offsets[q + 1] += 1;
        }
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut kids = vec![0usize; offsets[n]];
    for (x, &q) in parent.iter().enumerate() {
        if x != root {
            kids[fill[q]] = x;
            fill[q] += 1;
        }
    }
    (offsets, kids)
}

/// How to pick a spanning tree of a metric space. Edge weights are always
/// the ground distances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanningStrategy {
    /// Every point attached directly to the given root.
    Star { root: usize },
    /// Minimum spanning tree, rooted at the space's base point.
    Mst,
    /// User-supplied parent links.
    Explicit { parent: Vec<usize> },
}

pub fn spanning_tree<M: GroundMetric>(space: &M, strategy: &SpanningStrategy) -> Result<WeightedTree> {
    let n = space.len();
    if n == 0 {
        return Err(OtError::EmptySpace);
    }
    let parent = match strategy {
        SpanningStrategy::Star { root } => {
            if *root >= n {
                return Err(OtError::IndexOutOfRange { index: *root, len: n });
            }
            vec![*root; n]
        }
        SpanningStrategy::Mst => prim(space),
        SpanningStrategy::Explicit { parent } => {
            if parent.len() != n {
                return Err(OtError::DimensionMismatch { expected: n, got: parent.len() });
            }
            parent.clone()
        }
    };
    let weight = parent.iter().enumerate().map(|(x, &q)| if q < n { space.dist(x, q) } else { 0.0 }).collect();
    WeightedTree::new(parent, weight)
}

/// Dense Prim's algorithm, O(n^2).
fn prim<M: GroundMetric>(space: &M) -> Vec<usize> {
    let n = space.len();
    let root = space.base_point();
    let mut parent = vec![root; n];
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    best[root] = 0.0;
    for _ in 0..n {
        let mut x = usize::MAX;
        for y in 0..n {
            if !done[y] && (x == usize::MAX || best[y] < best[x]) {
                x = y;
            }
        }
        done[x] = true;
        for y in 0..n {
            if !done[y] {
                let d = space.dist(x, y);
                if d < best[y] {
                    best[y] = d;
                    parent[y] = x;
                }
            }
        }
    }
    parent
}

/// The tree of dyadic cells over a [`GridSpace`].
///
/// Nodes `0..grid.len()` are the grid points (the finest cells); coarser
/// cells follow level by level from `max_level - 1` down to the root cell
/// at level 0. A cell at level `l >= 1` hangs off its enclosing level
/// `l - 1` cell with weight `sqrt(D) 2^-l / 2`, the distance between the two
/// cell centres. Internal cells carry zero mass.
#[derive(Debug, Clone)]
pub struct DyadicTree {
    grid: GridSpace,
    tree: WeightedTree,
}

impl DyadicTree {
    pub fn new(grid: GridSpace) -> Result<Self> {
        let lmax = grid.max_level();
        let dim = grid.dim();
        // offset[l] = first node index of level l
        let mut offset = vec![0usize; lmax + 1];
        offset[lmax] = 0;
        let mut next = grid.len();
        for l in (0..lmax).rev() {
            offset[l] = next;
            next += grid.cells_at(l);
        }
        let total = next;
        let mut parent = vec![0usize; total];
        let mut weight = vec![0.0; total];
        let root = offset[0];
        parent[root] = root;
        for l in 1..=lmax {
            let w = (dim as f64).sqrt() * 0.5f64.powi(l as i32) / 2.0;
            for c in 0..grid.cells_at(l) {
                parent[offset[l] + c] = offset[l - 1] + parent_cell(c, dim, l);
                weight[offset[l] + c] = w;
            }
        }
        Ok(Self { grid, tree: WeightedTree::new(parent, weight)? })
    }

    pub fn grid(&self) -> &GridSpace {
        &self.grid
    }

    pub fn tree(&self) -> &WeightedTree {
        &self.tree
    }

    /// Extends a vector on grid points by zeros on the internal cells.
    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.tree.len()];
        full[..u.len()].copy_from_slice(u);
        full
    }
}

/// Index of the level `level - 1` cell containing level-`level` cell `c`.
fn parent_cell(c: usize, dim: usize, level: usize) -> usize {
    let mask = (1usize << level) - 1;
    let mut out = 0;
    for k in 0..dim {
        let a = (c >> (level * k)) & mask;
        out |= (a >> 1) << ((level - 1) * k);
    }
    out
}

/// Weight `D^(p/2) 2^(-p(l+1))` of the level-`l` cells in the grid bound.
pub fn grid_level_coefficient(dim: usize, level: usize, p: f64) -> f64 {
    ((dim as f64).sqrt() * 0.5f64.powi(level as i32 + 1)).powf(p)
}

/// `sum_l D^(p/2) 2^(-p(l+1)) sum_{F in P_l} |sum_{x in F} u_x|` over
/// `l = 0..=max_level`, by aggregating cell sums level by level.
///
/// For sum-zero `u` this is `Z^p` of the [`DyadicTree`]. It bounds the exact
/// limit statistic from above for `p = 1`. For `p > 1` it does not in
/// general: the tree joins two neighbouring points through their cell
/// centre at cost `2 (d/2)^p < d^p`.
pub fn grid_bound_power(grid: &GridSpace, u: &[f64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if u.len() != grid.len() {
        return Err(OtError::DimensionMismatch { expected: grid.len(), got: u.len() });
    }
    let dim = grid.dim();
    let mut sums = u.to_vec();
    let mut total = 0.0;
    for l in (0..=grid.max_level()).rev() {
        total += grid_level_coefficient(dim, l, p) * sums.iter().map(|s| s.abs()).sum::<f64>();
        if l > 0 {
            let mut coarse = vec![0.0; grid.cells_at(l - 1)];
            for (c, s) in sums.iter().enumerate() {
                coarse[parent_cell(c, dim, l)] += s;
            }
            sums = coarse;
        }
    }
    Ok(total)
}

/// The dyadic-grid upper bound statistic, `grid_bound_power(..)^(1/p)`.
pub fn grid_bound_statistic(grid: &GridSpace, u: &[f64], p: f64) -> Result<f64> {
    Ok(grid_bound_power(grid, u, p)?.powf(1.0 / p))
}
