//! Exact optimal transport and the flow problems behind the limit laws.
//!
//! All solves reduce to [`FlowNetwork`]. Transport between `r` and `s` is a
//! bipartite transshipment from `supp(r)` to `supp(s)`; the thresholded
//! variant keeps only arcs with `d < t` and sends everything else through a
//! virtual node with two half-cost arcs. Dual potentials are read off the
//! flow potentials, extended to zero-mass points, and pinned so that
//! `lambda` vanishes at the base point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::flow::FlowNetwork;
use crate::measures::{check_balanced, GaussianDraw, Measure};
use crate::space::{check_exponent, GroundMetric, ThresholdedMetric};

/// Plan entries at or below this mass are not treated as part of the
/// support of an optimal plan when building the dual-optimal face.
const FACE_SUPPORT_TOL: f64 = 1e-12;

/// Sparse coupling `w`, entries `(x, y, mass)` sorted by `(x, y)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (x, y, w) in pairs {
            if w > 0.0 {
                *merged.entry((x, y)).or_insert(0.0) += w;
            }
        }
        Self { entries: merged.into_iter().map(|((x, y), w)| (x, y, w)).collect() }
    }

    pub fn row_sums(&self, len: usize) -> Vec<f64> {
        let mut sums = vec![0.0; len];
        for &(x, _, w) in &self.entries {
            sums[x] += w;
        }
        sums
    }

    pub fn col_sums(&self, len: usize) -> Vec<f64> {
        let mut sums = vec![0.0; len];
        for &(_, y, w) in &self.entries {
            sums[y] += w;
        }
        sums
    }

    pub fn cost<M: GroundMetric>(&self, metric: &M, p: f64) -> f64 {
        self.entries.iter().map(|&(x, y, w)| w * metric.cost(x, y, p)).sum()
    }
}

/// Dual potentials with `lambda_x + mu_y <= d^p(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPair {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DualPair {
    pub fn objective(&self, r: &[f64], s: &[f64]) -> f64 {
        dot(r, &self.lambda) + dot(s, &self.mu)
    }

    /// Largest violation `lambda_x + mu_y - d^p(x, y)` over all pairs
    /// (nonpositive when feasible). O(n^2).
    pub fn max_violation<M: GroundMetric>(&self, metric: &M, p: f64) -> f64 {
        let n = metric.len();
        let mut worst = f64::NEG_INFINITY;
        for x in 0..n {
            for y in 0..n {
                worst = worst.max(self.lambda[x] + self.mu[y] - metric.cost(x, y, p));
            }
        }
        worst
    }

    fn pin(&mut self, base: usize) {
        let shift = self.lambda[base];
        self.lambda.iter_mut().for_each(|l| *l -= shift);
        self.mu.iter_mut().for_each(|m| *m += shift);
    }
}

/// Result of an exact transport solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transport {
    /// `W_p(r, s)`.
    pub distance: f64,
    /// `W_p^p(r, s)`, the optimal cost.
    pub cost: f64,
    pub p: f64,
    pub plan: TransportPlan,
    pub dual: DualPair,
    /// Primal cost minus dual objective.
    pub gap: f64,
}

/// Value of `max <g, lambda>` over `lambda_x - lambda_y <= d^p(x, y)`,
/// with a maximiser pinned to zero at the base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitFlow {
    pub value: f64,
    pub lambda: Vec<f64>,
}

/// Value and maximiser of the linear functional over the dual-optimal face.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceMax {
    pub value: f64,
    pub dual: DualPair,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair<M: GroundMetric>(metric: &M, r: &Measure, s: &Measure, p: f64) -> Result<()> {
    check_exponent(p)?;
    r.require_probability()?;
    s.require_probability()?;
    r.check_len(metric.len())?;
    s.check_len(metric.len())
}

fn finish(cost: f64, p: f64, plan: TransportPlan, dual: DualPair, r: &Measure, s: &Measure) -> Result<Transport> {
    let dual_value = dual.objective(r.mass(), s.mass());
    let gap = cost - dual_value;
    if gap.abs() > 1e-8 * (1.0 + cost.abs()) {
        return Err(OtError::NonConvergence { gap });
    }
    let cost = cost.max(0.0);
    Ok(Transport { distance: cost.powf(1.0 / p), cost, p, plan, dual, gap })
}

/// Exact `W_p(r, s)` on any ground metric, with optimal plan and duals.
pub fn wasserstein<M: GroundMetric>(metric: &M, r: &Measure, s: &Measure, p: f64) -> Result<Transport> {
    check_pair(metric, r, s, p)?;
    let sources = r.support();
    let sinks = s.support();
    let (k, l) = (sources.len(), sinks.len());
    let mut net = FlowNetwork::with_arc_capacity(k + l, k * l);
    for (i, &x) in sources.iter().enumerate() {
        net.set_supply(i, r.mass()[x]);
        for (j, &y) in sinks.iter().enumerate() {
            net.add_arc(i, k + j, metric.cost(x, y, p));
        }
    }
    for (j, &y) in sinks.iter().enumerate() {
        net.set_supply(k + j, -s.mass()[y]);
    }
    let sol = net.solve()?;
    let plan = TransportPlan::from_pairs(
        sol.flow.iter().enumerate().map(|(a, &f)| (sources[a / l], sinks[a % l], f)),
    );
    let mut dual = support_dual(metric.len(), &sources, &sinks, &sol.potential);
    complete_dual(&mut dual, |x, y| metric.cost(x, y, p), |_| None);
    dual.pin(metric.base_point());
    finish(sol.cost, p, plan, dual, r, s)
}

/// `W_p` under `min(d, t)` on the sparse arc set `{d < t}` plus a virtual
/// node reached at cost `t^p / 2` from every source and left at `t^p / 2`
/// towards every sink.
pub fn thresholded_wasserstein(tm: &ThresholdedMetric, r: &Measure, s: &Measure, p: f64) -> Result<Transport> {
    check_pair(tm, r, s, p)?;
    let n = tm.len();
    let sources = r.support();
    let sinks = s.support();
    let (k, l) = (sources.len(), sinks.len());
    let mut sink_pos = vec![u32::MAX; n];
    for (j, &y) in sinks.iter().enumerate() {
        sink_pos[y] = j as u32;
    }
    let virt = k + l;
    let half = tm.threshold().powf(p) / 2.0;
    let mut net = FlowNetwork::with_arc_capacity(k + l + 1, k + l);
    // (source index, sink index) of each direct arc, in insertion order
    let mut direct: Vec<(u32, u32)> = Vec::new();
    for (i, &x) in sources.iter().enumerate() {
        net.set_supply(i, r.mass()[x]);
        for &y in tm.neighbors(x) {
            let j = sink_pos[y as usize];
            if j != u32::MAX {
                net.add_arc(i, k + j as usize, tm.base().cost(x, y as usize, p));
                direct.push((i as u32, j));
            }
        }
    }
    let first_star = net.arcs();
    for i in 0..k {
        net.add_arc(i, virt, half);
    }
    for (j, &sink) in sinks.iter().enumerate() {
        net.set_supply(k + j, -s.mass()[sink]);
        net.add_arc(virt, k + j, half);
    }
    let sol = net.solve()?;

    let mut pairs: Vec<(usize, usize, f64)> = direct
        .iter()
        .zip(&sol.flow)
        .map(|(&(i, j), &f)| (sources[i as usize], sinks[j as usize], f))
        .collect();
    // pair up the mass routed through the virtual node (any pairing costs t^p)
    let into: Vec<(usize, f64)> =
        (0..k).map(|i| (sources[i], sol.flow[first_star + i])).filter(|(_, f)| *f > 0.0).collect();
    let out: Vec<(usize, f64)> =
        (0..l).map(|j| (sinks[j], sol.flow[first_star + k + j])).filter(|(_, f)| *f > 0.0).collect();
    pairs.extend(northwest_corner(&into, &out));
    let plan = TransportPlan::from_pairs(pairs);

    let mut dual = support_dual(n, &sources, &sinks, &sol.potential[..k + l]);
    let tp = tm.threshold().powf(p);
    complete_dual(
        &mut dual,
        |x, y| tm.cost(x, y, p),
        |x| Some((tm.neighbors(x), tp)),
    );
    dual.pin(tm.base_point());
    finish(sol.cost, p, plan, dual, r, s)
}

fn northwest_corner(into: &[(usize, f64)], out: &[(usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut a, mut b) = (into.first().map_or(0.0, |v| v.1), out.first().map_or(0.0, |v| v.1));
    while i < into.len() && j < out.len() {
        let w = a.min(b);
        pairs.push((into[i].0, out[j].0, w));
        a -= w;
        b -= w;
        if a <= b {
            i += 1;
            a = into.get(i).map_or(0.0, |v| v.1);
            if b <= 0.0 {
                j += 1;
                b = out.get(j).map_or(0.0, |v| v.1);
            }
        } else {
            j += 1;
            b = out.get(j).map_or(0.0, |v| v.1);
        }
    }
    pairs
}

fn support_dual(n: usize, sources: &[usize], sinks: &[usize], potential: &[f64]) -> DualPair {
    let k = sources.len();
    let mut lambda = vec![f64::NAN; n];
    let mut mu = vec![f64::NAN; n];
    for (i, &x) in sources.iter().enumerate() {
        lambda[x] = -potential[i];
    }
    for (j, &y) in sinks.iter().enumerate() {
        mu[y] = potential[k + j];
    }
    DualPair { lambda, mu }
}

/// Fills potentials of zero-mass points with the largest feasible values:
/// first `mu` against the source support, then `lambda` against every `mu`.
/// `sparse(x)` may return the neighbour list of `x` together with the
/// constant cost `t^p` paid by every non-neighbour.
fn complete_dual<'a, C, S>(dual: &mut DualPair, cost: C, sparse: S)
where
    C: Fn(usize, usize) -> f64,
    S: Fn(usize) -> Option<(&'a [u32], f64)>,
{
    let n = dual.lambda.len();
    let sources: Vec<usize> = (0..n).filter(|&x| !dual.lambda[x].is_nan()).collect();
    let max_lambda = sources.iter().map(|&x| dual.lambda[x]).fold(f64::NEG_INFINITY, f64::max);
    for y in 0..n {
        if !dual.mu[y].is_nan() {
            continue;
        }
        dual.mu[y] = match sparse(y) {
            Some((nbrs, far)) => nbrs
                .iter()
                .map(|&x| x as usize)
                .filter(|&x| !dual.lambda[x].is_nan())
                .map(|x| cost(x, y) - dual.lambda[x])
                .fold(far - max_lambda, f64::min),
            None => sources.iter().map(|&x| cost(x, y) - dual.lambda[x]).fold(f64::INFINITY, f64::min),
        };
    }
    let max_mu = dual.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in 0..n {
        if !dual.lambda[x].is_nan() {
            continue;
        }
        dual.lambda[x] = match sparse(x) {
            Some((nbrs, far)) => nbrs
                .iter()
                .map(|&y| cost(x, y as usize) - dual.mu[y as usize])
                .fold(far - max_mu, f64::min),
            None => (0..n).map(|y| cost(x, y) - dual.mu[y]).fold(f64::INFINITY, f64::min),
        };
    }
}

/// `max <g, lambda>` over `lambda_x - lambda_y <= d^p(x, y)`, computed as the
/// min-cost transshipment of `g+` to `g-` over the complete graph with arc
/// costs `d^p`. For `p <= 1` the cost is itself a metric, so only points
/// with `g != 0` are routed and the remaining potentials are filled in.
pub fn limit_flow<M: GroundMetric>(metric: &M, g: &GaussianDraw, p: f64) -> Result<LimitFlow> {
    check_exponent(p)?;
    let n = metric.len();
    if g.values.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: g.values.len() });
    }
    check_balanced(&g.values)?;
    let nodes: Vec<usize> = if p <= 1.0 { (0..n).filter(|&x| g.values[x] != 0.0).collect() } else { (0..n).collect() };
    let k = nodes.len();
    let mut net = FlowNetwork::with_arc_capacity(k, k * k.saturating_sub(1));
    for (i, &x) in nodes.iter().enumerate() {
        net.set_supply(i, g.values[x]);
        for (j, &y) in nodes.iter().enumerate() {
            if i != j {
                net.add_arc(i, j, metric.cost(x, y, p));
            }
        }
    }
    balance_exactly(&mut net);
    let sol = net.solve()?;
    let mut lambda = vec![f64::NAN; n];
    for (i, &x) in nodes.iter().enumerate() {
        lambda[x] = -sol.potential[i];
    }
    fill_metric_potentials(&mut lambda, |x, y| metric.cost(x, y, p));
    pin(&mut lambda, metric.base_point());
    Ok(LimitFlow { value: sol.cost.max(0.0), lambda })
}

/// [`limit_flow`] under `min(d, t)`: arcs only between neighbours plus the
/// virtual node, so the network has O(N) arcs when neighbourhoods are O(1).
pub fn thresholded_limit_flow(tm: &ThresholdedMetric, g: &GaussianDraw, p: f64) -> Result<LimitFlow> {
    check_exponent(p)?;
    let n = tm.len();
    if g.values.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: g.values.len() });
    }
    check_balanced(&g.values)?;
    let keep: Vec<bool> = (0..n).map(|x| p > 1.0 || g.values[x] != 0.0).collect();
    let nodes: Vec<usize> = (0..n).filter(|&x| keep[x]).collect();
    let mut pos = vec![u32::MAX; n];
    for (i, &x) in nodes.iter().enumerate() {
        pos[x] = i as u32;
    }
    let k = nodes.len();
    let virt = k;
    let half = tm.threshold().powf(p) / 2.0;
    let mut net = FlowNetwork::with_arc_capacity(k + 1, 3 * k);
    for (i, &x) in nodes.iter().enumerate() {
        net.set_supply(i, g.values[x]);
        for &y in tm.neighbors(x) {
            let j = pos[y as usize];
            if j != u32::MAX && j as usize != i {
                net.add_arc(i, j as usize, tm.base().cost(x, y as usize, p));
            }
        }
        net.add_arc(i, virt, half);
        net.add_arc(virt, i, half);
    }
    balance_exactly(&mut net);
    let sol = net.solve()?;
    let mut lambda = vec![f64::NAN; n];
    for (i, &x) in nodes.iter().enumerate() {
        lambda[x] = -sol.potential[i];
    }
    if nodes.is_empty() {
        lambda.iter_mut().for_each(|l| *l = 0.0);
    } else if nodes.len() < n {
        // every non-neighbour pair costs t^p
        let tp = tm.threshold().powf(p);
        let hi = lambda.iter().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, |hi, &v| hi.max(v));
        for x in 0..n {
            if !keep[x] {
                let mut value = hi - tp;
                for &y in tm.neighbors(x) {
                    let ly = lambda[y as usize];
                    if !ly.is_nan() {
                        value = value.max(ly - tm.cost(y as usize, x, p));
                    }
                }
                lambda[x] = value;
            }
        }
    }
    pin(&mut lambda, tm.base_point());
    Ok(LimitFlow { value: sol.cost.max(0.0), lambda })
}

/// Pushes the rounding residue of the supplies onto the largest entry so the
/// network balances to the last bit.
fn balance_exactly(net: &mut FlowNetwork) {
    let total: f64 = net.supply().iter().sum();
    if total != 0.0 {
        if let Some((i, &b)) = net
            .supply()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            net.set_supply(i, b - total);
        }
    }
}

/// Fills NaN entries with `max_y (lambda_y - c(y, x))` over assigned `y`,
/// one point at a time; feasibility is preserved for metric costs.
fn fill_metric_potentials<C: Fn(usize, usize) -> f64>(lambda: &mut [f64], cost: C) {
    let n = lambda.len();
    let mut assigned: Vec<usize> = (0..n).filter(|&x| !lambda[x].is_nan()).collect();
    if assigned.is_empty() {
        lambda.iter_mut().for_each(|l| *l = 0.0);
        return;
    }
    for x in 0..n {
        if lambda[x].is_nan() {
            lambda[x] = assigned.iter().map(|&y| lambda[y] - cost(y, x)).fold(f64::NEG_INFINITY, f64::max);
            assigned.push(x);
        }
    }
}

fn pin(lambda: &mut [f64], base: usize) {
    let shift = lambda[base];
    lambda.iter_mut().for_each(|l| *l -= shift);
}

/// Maximises `sqrt(alpha) <g, lambda> + sqrt(1 - alpha) <h, mu>` over the
/// dual-optimal face of the `(r, s)` transport problem, i.e. over feasible
/// pairs that are tight on the support of the optimal plan in `transport`.
/// Without `h` the objective is `<g, lambda>`.
///
/// Solved through its dual: a transshipment from sources to sinks in which
/// plan-support arcs may also be used backwards at negative cost, started
/// from the optimal potentials of `transport`.
#[allow(clippy::too_many_arguments)]
pub fn dual_face_max<M: GroundMetric>(
    metric: &M,
    r: &Measure,
    s: &Measure,
    p: f64,
    transport: &Transport,
    g: &GaussianDraw,
    h: Option<&GaussianDraw>,
    alpha: f64,
) -> Result<FaceMax> {
    check_pair(metric, r, s, p)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(OtError::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = metric.len();
    if g.values.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: g.values.len() });
    }
    let (wg, wh) = match h {
        Some(h) => {
            if h.values.len() != n {
                return Err(OtError::DimensionMismatch { expected: n, got: h.values.len() });
            }
            (alpha.sqrt(), (1.0 - alpha).sqrt())
        }
        None => (1.0, 0.0),
    };
    let sources = r.support();
    let sinks = s.support();
    let (k, l) = (sources.len(), sinks.len());
    let mut sink_pos = vec![usize::MAX; n];
    for (j, &y) in sinks.iter().enumerate() {
        sink_pos[y] = j;
    }
    let mut source_pos = vec![usize::MAX; n];
    for (i, &x) in sources.iter().enumerate() {
        source_pos[x] = i;
    }
    let mut net = FlowNetwork::with_arc_capacity(k + l, k * l + transport.plan.entries.len());
    for (i, &x) in sources.iter().enumerate() {
        net.set_supply(i, wg * g.values[x]);
        for (j, &y) in sinks.iter().enumerate() {
            net.add_arc(i, k + j, metric.cost(x, y, p));
        }
    }
    for (j, &y) in sinks.iter().enumerate() {
        let hy = h.map_or(0.0, |h| h.values[y]);
        net.set_supply(k + j, -wh * hy);
    }
    for &(x, y, w) in &transport.plan.entries {
        if w <= FACE_SUPPORT_TOL {
            continue;
        }
        let (i, j) = (source_pos[x], sink_pos[y]);
        if i == usize::MAX || j == usize::MAX {
            return Err(OtError::Infeasible(format!("plan entry ({x}, {y}) lies outside the supports")));
        }
        net.add_arc(k + j, i, -metric.cost(x, y, p));
    }
    balance_exactly(&mut net);
    let start: Vec<f64> = sources
        .iter()
        .map(|&x| -transport.dual.lambda[x])
        .chain(sinks.iter().map(|&y| transport.dual.mu[y]))
        .collect();
    let sol = net
        .solve_from(Some(&start))
        .map_err(|e| OtError::Infeasible(format!("dual-optimal face: {e}")))?;
    let mut dual = support_dual(n, &sources, &sinks, &sol.potential);
    complete_dual(&mut dual, |x, y| metric.cost(x, y, p), |_| None);
    dual.pin(metric.base_point());
    Ok(FaceMax { value: sol.cost, dual })
}
