//! Uncapacitated min-cost transshipment with real-valued supplies.
//!
//! Successive shortest paths: Dijkstra on reduced costs from one excess node
//! until the first deficit node is settled, potentials updated on the settled
//! set only, then augmentation along the path. Arc costs may be negative as
//! long as the caller supplies potentials under which every reduced cost is
//! nonnegative.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{OtError, Result};

/// Excess below this (relative to the total supply) counts as routed.
const MASS_RTOL: f64 = 1e-14;
/// Stranded excess below this (relative) is rounding residue, not infeasibility.
const RESIDUE_RTOL: f64 = 1e-10;
/// Allowed violation of reduced-cost nonnegativity for starting potentials.
const POTENTIAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    supply: Vec<f64>,
    from: Vec<u32>,
    to: Vec<u32>,
    cost: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Flow on each arc, in insertion order.
    pub flow: Vec<f64>,
    /// Node potentials: `cost(u, v) + pi(u) - pi(v) >= 0` on every arc, with
    /// equality wherever the flow is positive.
    pub potential: Vec<f64>,
    pub cost: f64,
    /// Largest unrouted excess left at any node.
    pub residual_excess: f64,
    pub augmentations: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self { supply: vec![0.0; nodes], ..Default::default() }
    }

    pub fn with_arc_capacity(nodes: usize, arcs: usize) -> Self {
        Self {
            supply: vec![0.0; nodes],
            from: Vec::with_capacity(arcs),
            to: Vec::with_capacity(arcs),
            cost: Vec::with_capacity(arcs),
        }
    }

    pub fn nodes(&self) -> usize {
        self.supply.len()
    }

    pub fn arcs(&self) -> usize {
        self.cost.len()
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cost: f64) -> usize {
        debug_assert!(from < self.nodes() && to < self.nodes());
        self.from.push(from as u32);
        self.to.push(to as u32);
        self.cost.push(cost);
        self.cost.len() - 1
    }

    /// Positive supply leaves the node, negative supply is absorbed.
    pub fn set_supply(&mut self, node: usize, supply: f64) {
        self.supply[node] = supply;
    }

    pub fn supply(&self) -> &[f64] {
        &self.supply
    }

    pub fn arc(&self, a: usize) -> (usize, usize, f64) {
        (self.from[a] as usize, self.to[a] as usize, self.cost[a])
    }

    pub fn solve(&self) -> Result<FlowSolution> {
        self.solve_from(None)
    }

    /// Solves starting from `potentials`, which must make every reduced cost
    /// nonnegative (required when some arc costs are negative).
    pub fn solve_from(&self, potentials: Option<&[f64]>) -> Result<FlowSolution> {
        let n = self.nodes();
        let m = self.arcs();
        let total: f64 = self.supply.iter().sum();
        let scale: f64 = self.supply.iter().map(|b| b.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        if total.abs() > 1e-10 * scale.max(1.0) {
            return Err(OtError::Unbalanced { total });
        }
        let eps = MASS_RTOL * scale.max(1.0);

        let mut pi = match potentials {
            Some(p) => {
                if p.len() != n {
                    return Err(OtError::DimensionMismatch { expected: n, got: p.len() });
                }
                p.to_vec()
            }
            None => vec![0.0; n],
        };
        for a in 0..m {
            let (u, v) = (self.from[a] as usize, self.to[a] as usize);
            let rc = self.cost[a] + pi[u] - pi[v];
            if rc < -POTENTIAL_TOL * (1.0 + self.cost[a].abs()) {
                return Err(OtError::Infeasible(format!("starting potentials violate arc {a} by {rc}")));
            }
        }

        // CSR adjacency for outgoing and incoming arcs.
        let (out_off, out_arcs) = csr(n, &self.from);
        let (in_off, in_arcs) = csr(n, &self.to);

        let mut flow = vec![0.0; m];
        let mut excess = self.supply.clone();
        let mut dist = vec![f64::INFINITY; n];
        let mut seen = vec![0u32; n];
        let mut settled = vec![0u32; n];
        let mut pred: Vec<(u32, bool)> = vec![(u32::MAX, true); n];
        let mut popped: Vec<u32> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut round = 0u32;
        let mut augmentations = 0usize;

        for s in 0..n {
            while excess[s] > eps {
                round += 1;
                popped.clear();
                heap.clear();
                dist[s] = 0.0;
                seen[s] = round;
                pred[s] = (u32::MAX, true);
                heap.push(Entry { dist: 0.0, node: s as u32 });
                let mut target = None;
                while let Some(Entry { dist: d, node }) = heap.pop() {
                    let u = node as usize;
                    if settled[u] == round || d > dist[u] {
                        continue;
                    }
                    settled[u] = round;
                    popped.push(node);
                    if excess[u] < -eps {
                        target = Some(u);
                        break;
                    }
                    let pu = pi[u];
                    for &a in &out_arcs[out_off[u]..out_off[u + 1]] {
                        let a = a as usize;
                        let v = self.to[a] as usize;
                        if settled[v] == round {
                            continue;
                        }
                        let nd = d + (self.cost[a] + pu - pi[v]).max(0.0);
                        if seen[v] != round || nd < dist[v] {
                            seen[v] = round;
                            dist[v] = nd;
                            pred[v] = (a as u32, true);
                            heap.push(Entry { dist: nd, node: v as u32 });
                        }
                    }
                    for &a in &in_arcs[in_off[u]..in_off[u + 1]] {
                        let a = a as usize;
                        if flow[a] <= eps {
                            continue;
                        }
                        let v = self.from[a] as usize;
                        if settled[v] == round {
                            continue;
                        }
                        let nd = d + (-self.cost[a] + pu - pi[v]).max(0.0);
                        if seen[v] != round || nd < dist[v] {
                            seen[v] = round;
                            dist[v] = nd;
                            pred[v] = (a as u32, false);
                            heap.push(Entry { dist: nd, node: v as u32 });
                        }
                    }
                }
                let Some(t) = target else {
                    if excess[s] <= RESIDUE_RTOL * scale.max(1.0) {
                        break;
                    }
                    return Err(OtError::Infeasible(format!("excess {} at node {s} cannot reach any deficit", excess[s])));
                };
                let reach = dist[t];
                for &v in &popped {
                    let v = v as usize;
                    pi[v] += dist[v] - reach;
                }

                let mut delta = excess[s].min(-excess[t]);
                let mut v = t;
                while v != s {
                    let (a, forward) = pred[v];
                    let a = a as usize;
                    if forward {
                        v = self.from[a] as usize;
                    } else {
                        delta = delta.min(flow[a]);
                        v = self.to[a] as usize;
                    }
                }
                let mut v = t;
                while v != s {
                    let (a, forward) = pred[v];
                    let a = a as usize;
                    if forward {
                        flow[a] += delta;
                        v = self.from[a] as usize;
                    } else {
                        flow[a] -= delta;
                        if flow[a] < 0.0 {
                            flow[a] = 0.0;
                        }
                        v = self.to[a] as usize;
                    }
                }
                excess[s] -= delta;
                excess[t] += delta;
                augmentations += 1;
            }
        }

        let cost = flow.iter().zip(&self.cost).map(|(f, c)| f * c).sum();
        let residual_excess = excess.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        Ok(FlowSolution { flow, potential: pi, cost, residual_excess, augmentations })
    }

    /// Writes the instance in DIMACS `min` format. Node ids are 1-based;
    /// arcs are given capacity equal to the total positive supply, which no
    /// optimal flow exceeds. Supplies and costs are written as decimals.
    pub fn to_dimacs(&self) -> String {
        let cap: f64 = self.supply.iter().filter(|b| **b > 0.0).sum();
        let mut out = String::new();
        let _ = writeln!(out, "c uncapacitated transshipment, real-valued supplies");
        let _ = writeln!(out, "p min {} {}", self.nodes(), self.arcs());
        for (i, b) in self.supply.iter().enumerate() {
            if *b != 0.0 {
                let _ = writeln!(out, "n {} {:?}", i + 1, b);
            }
        }
        for a in 0..self.arcs() {
            let _ = writeln!(out, "a {} {} 0 {:?} {:?}", self.from[a] + 1, self.to[a] + 1, cap, self.cost[a]);
        }
        out
    }

    /// Reads a DIMACS `min` instance, ignoring lower bounds and capacities.
    pub fn from_dimacs<R: BufRead>(reader: R) -> Result<Self> {
        let mut net: Option<FlowNetwork> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| OtError::Parse(format!("line {}: {what}", lineno + 1));
            match fields.first().copied() {
                None | Some("c") => {}
                Some("p") => {
                    if fields.len() != 4 || fields[1] != "min" {
                        return Err(bad("expected `p min NODES ARCS`"));
                    }
                    let nodes: usize = fields[2].parse().map_err(|_| bad("node count"))?;
                    let arcs: usize = fields[3].parse().map_err(|_| bad("arc count"))?;
                    net = Some(FlowNetwork::with_arc_capacity(nodes, arcs));
                }
                Some("n") => {
                    let net = net.as_mut().ok_or_else(|| bad("`n` before `p`"))?;
                    let id: usize = fields.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("node id"))?;
                    let b: f64 = fields.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("supply"))?;
                    if id == 0 || id > net.nodes() {
                        return Err(bad("node id out of range"));
                    }
                    net.set_supply(id - 1, b);
                }
                Some("a") => {
                    let net = net.as_mut().ok_or_else(|| bad("`a` before `p`"))?;
                    if fields.len() != 6 {
                        return Err(bad("expected `a SRC DST LOW CAP COST`"));
                    }
                    let u: usize = fields[1].parse().map_err(|_| bad("source"))?;
                    let v: usize = fields[2].parse().map_err(|_| bad("target"))?;
                    let c: f64 = fields[5].parse().map_err(|_| bad("cost"))?;
                    if u == 0 || v == 0 || u > net.nodes() || v > net.nodes() {
                        return Err(bad("arc endpoint out of range"));
                    }
                    net.add_arc(u - 1, v - 1, c);
                }
                Some(other) => return Err(bad(&format!("unknown line type {other:?}"))),
            }
        }
        net.ok_or_else(|| OtError::Parse("missing problem line".into()))
    }
}

fn csr(n: usize, keys: &[u32]) -> (Vec<usize>, Vec<u32>) {
    let mut off = vec![0usize; n + 1];
    for &k in keys {
        off[k as usize + 1] += 1;
    }
    for i in 0..n {
        off[i + 1] += off[i];
    }
    let mut fill = off.clone();
    let mut items = vec![0u32; keys.len()];
    for (a, &k) in keys.iter().enumerate() {
        items[fill[k as usize]] = a as u32;
        fill[k as usize] += 1;
    }
    (off, items)
}
