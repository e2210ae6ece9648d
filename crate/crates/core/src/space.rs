//! Finite metric spaces, thresholded metrics and regular grids.
//!
//! Countable supports are always handled through an explicit finite
//! truncation (see [`crate::limits::truncate`]); everything here works on a
//! finite index set `0..len`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::measures::Measure;

/// Relative tolerance used when checking a distance matrix for symmetry.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Anything that can serve as a ground distance on `0..len()`.
pub trait GroundMetric: Sync {
    fn len(&self) -> usize;

    fn dist(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the reference point `x0`.
    fn base_point(&self) -> usize {
        0
    }

    /// `dist(i, j)^p`, with the convention `0^p = 0`.
    fn cost(&self, i: usize, j: usize, p: f64) -> f64 {
        let d = self.dist(i, j);
        if d == 0.0 {
            0.0
        } else if p == 1.0 {
            d
        } else {
            d.powf(p)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Distances {
    /// Row-major `n x n` matrix.
    Matrix(Vec<f64>),
    /// Row-major `n x dim` coordinates; Euclidean distance computed on demand.
    Euclidean { dim: usize, coords: Vec<f64> },
}

/// Where the distances of a [`MetricSpace`] come from.
#[derive(Debug, Clone)]
pub enum DistanceSource {
    Matrix(Vec<Vec<f64>>),
    Coordinates(Vec<Vec<f64>>),
}

/// A validated finite metric space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpace {
    ids: Vec<String>,
    distances: Distances,
    base_point: usize,
}

impl MetricSpace {
    /// Builds a space from point ids and a distance source. Ids default to
    /// `"0", "1", ...` when `ids` is `None`.
    pub fn build(ids: Option<Vec<String>>, source: DistanceSource) -> Result<Self> {
        let space = match source {
            DistanceSource::Matrix(rows) => Self::from_matrix(rows)?,
            DistanceSource::Coordinates(points) => Self::from_coordinates(points)?,
        };
        match ids {
            Some(ids) => space.with_ids(ids),
            None => Ok(space),
        }
    }

    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(OtError::EmptySpace);
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(OtError::NotSquare { row: i, len: row.len(), expected: n });
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            let dii = flat[i * n + i];
            if dii != 0.0 {
                return Err(OtError::NonzeroDiagonal { i, value: dii });
            }
            for j in 0..n {
                let dij = flat[i * n + j];
                if !dij.is_finite() || dij < 0.0 {
                    return Err(OtError::InvalidDistance { i, j, value: dij });
                }
            }
            for j in (i + 1)..n {
                let dij = flat[i * n + j];
                let dji = flat[j * n + i];
                if (dij - dji).abs() > SYMMETRY_RTOL * dij.abs().max(dji.abs()) {
                    return Err(OtError::NotSymmetric { i, j, dij, dji });
                }
                if dij == 0.0 {
                    return Err(OtError::ZeroDistance { i, j });
                }
            }
        }
        Ok(Self { ids: default_ids(n), distances: Distances::Matrix(flat), base_point: 0 })
    }

    pub fn from_coordinates(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(OtError::EmptySpace);
        }
        let dim = points[0].len();
        let mut coords = Vec::with_capacity(n * dim);
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(OtError::CoordinateDimension { point: i, got: p.len(), expected: dim });
            }
            if let Some(&bad) = p.iter().find(|c| !c.is_finite()) {
                return Err(OtError::InvalidDistance { i, j: i, value: bad });
            }
            // -0.0 and 0.0 must collide
            let key: Vec<u64> = p.iter().map(|&c| (c + 0.0).to_bits()).collect();
            if let Some(&j) = seen.get(&key) {
                return Err(OtError::ZeroDistance { i: j, j: i });
            }
            seen.insert(key, i);
            coords.extend_from_slice(p);
        }
        Ok(Self { ids: default_ids(n), distances: Distances::Euclidean { dim, coords }, base_point: 0 })
    }

    /// Coordinates that are known to be pairwise distinct (grids).
    pub(crate) fn from_distinct_coordinates(dim: usize, coords: Vec<f64>) -> Self {
        let n = coords.len() / dim.max(1);
        Self { ids: default_ids(n), distances: Distances::Euclidean { dim, coords }, base_point: 0 }
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(OtError::DimensionMismatch { expected: self.len(), got: ids.len() });
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn with_base_point(mut self, base: usize) -> Result<Self> {
        if base >= self.len() {
            return Err(OtError::IndexOutOfRange { index: base, len: self.len() });
        }
        self.base_point = base;
        Ok(self)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Map from id to index, for bulk lookups.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn dimension(&self) -> Option<usize> {
        match &self.distances {
            Distances::Euclidean { dim, .. } => Some(*dim),
            Distances::Matrix(_) => None,
        }
    }

    pub fn coordinates(&self, i: usize) -> Option<&[f64]> {
        match &self.distances {
            Distances::Euclidean { dim, coords } => Some(&coords[i * dim..(i + 1) * dim]),
            Distances::Matrix(_) => None,
        }
    }

    /// The sub-space on `indices` (in the given order). The base point is
    /// carried over when it is retained, otherwise the first index becomes
    /// the base point.
    pub fn subspace(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(OtError::EmptySpace);
        }
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(OtError::IndexOutOfRange { index: bad, len: n });
        }
        let distances = match &self.distances {
            Distances::Matrix(m) => {
                let k = indices.len();
                let mut sub = Vec::with_capacity(k * k);
                for &i in indices {
                    for &j in indices {
                        sub.push(m[i * n + j]);
                    }
                }
                Distances::Matrix(sub)
            }
            Distances::Euclidean { dim, coords } => {
                let mut sub = Vec::with_capacity(indices.len() * dim);
                for &i in indices {
                    sub.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
                }
                Distances::Euclidean { dim: *dim, coords: sub }
            }
        };
        let base_point = indices.iter().position(|&i| i == self.base_point).unwrap_or(0);
        Ok(Self { ids: indices.iter().map(|&i| self.ids[i].clone()).collect(), distances, base_point })
    }

    /// Largest pairwise distance. O(n^2).
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.dist(i, j));
            }
        }
        best
    }

    /// Dense copy of all pairwise distances.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.dist(i, j)).collect()).collect()
    }
}

impl GroundMetric for MetricSpace {
    fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.distances {
            Distances::Matrix(m) => m[i * self.ids.len() + j],
            Distances::Euclidean { dim, coords } => {
                if i == j {
                    return 0.0;
                }
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        }
    }

    fn base_point(&self) -> usize {
        self.base_point
    }
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// `min(d, t)` over a base space, with the strict neighbourhoods
/// `{y : d(x, y) < t}` stored in CSR form. Every `x` is its own neighbour.
#[derive(Debug, Clone)]
pub struct ThresholdedMetric {
    base: MetricSpace,
    t: f64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl ThresholdedMetric {
    pub fn new(base: MetricSpace, t: f64) -> Result<Self> {
        if t.is_nan() || t <= 0.0 || t.is_infinite() {
            return Err(OtError::InvalidThreshold(t));
        }
        let lists = match (&base.distances, base.dimension()) {
            (Distances::Euclidean { .. }, Some(dim)) if (1..=3).contains(&dim) => {
                hashed_neighbors(&base, t)
            }
            _ => {
                let n = base.len();
                (0..n).map(|i| (0..n).filter(|&j| base.dist(i, j) < t).map(|j| j as u32).collect()).collect()
            }
        };
        let mut offsets = Vec::with_capacity(base.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for list in lists {
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self { base, t, offsets, neighbors })
    }

    pub fn threshold(&self) -> f64 {
        self.t
    }

    pub fn base(&self) -> &MetricSpace {
        &self.base
    }

    /// Points strictly closer than `t` to `x`, including `x` itself, ascending.
    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.neighbors[self.offsets[x]..self.offsets[x + 1]]
    }

    /// Total number of stored (ordered) neighbour pairs.
    pub fn neighbor_pairs(&self) -> usize {
        self.neighbors.len()
    }
}

impl GroundMetric for ThresholdedMetric {
    fn len(&self) -> usize {
        self.base.len()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.base.dist(i, j).min(self.t)
    }

    fn base_point(&self) -> usize {
        self.base.base_point
    }
}

/// Uniform-cell spatial hash with cell side `t`; only the 3^dim adjacent
/// cells can hold points within distance `t`.
fn hashed_neighbors(space: &MetricSpace, t: f64) -> Vec<Vec<u32>> {
    let n = space.len();
    let dim = space.dimension().unwrap_or(0);
    let key_of = |i: usize| -> Vec<i64> {
        space.coordinates(i).unwrap().iter().map(|c| (c / t).floor() as i64).collect()
    };
    let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
    for i in 0..n {
        cells.entry(key_of(i)).or_default().push(i as u32);
    }
    let mut shifts: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..dim {
        shifts = shifts
            .into_iter()
            .flat_map(|s| {
                (-1..=1).map(move |d| {
                    let mut s = s.clone();
                    s.push(d);
                    s
                })
            })
            .collect();
    }
    (0..n)
        .map(|i| {
            let key = key_of(i);
            let mut list = Vec::new();
            let mut probe = key.clone();
            for shift in &shifts {
                for (k, s) in shift.iter().enumerate() {
                    probe[k] = key[k] + s;
                }
                if let Some(members) = cells.get(&probe) {
                    list.extend(members.iter().copied().filter(|&j| space.dist(i, j as usize) < t));
                }
            }
            list.sort_unstable();
            list
        })
        .collect()
}

/// The regular grid of `side^dim` cell centres in `[0, 1]^dim`.
///
/// Point index `i` has multi-index `(i % side, (i / side) % side, ...)`, i.e.
/// axis 0 varies fastest. For images axis 0 is the column (x) and axis 1 the
/// row (y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpace {
    dim: usize,
    side: usize,
}

impl GridSpace {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(OtError::InvalidGrid("dimension must be positive".into()));
        }
        if side == 0 || !side.is_power_of_two() {
            return Err(OtError::NotPowerOfTwo(side));
        }
        if (side as f64).powi(dim as i32) > u32::MAX as f64 {
            return Err(OtError::InvalidGrid(format!("{side}^{dim} points is too many")));
        }
        Ok(Self { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `log2(side)`.
    pub fn max_level(&self) -> usize {
        self.side.trailing_zeros() as usize
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rest = i;
        (0..self.dim)
            .map(|_| {
                let c = rest % self.side;
                rest /= self.side;
                c
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &c| acc * self.side + c)
    }

    pub fn coordinates(&self, i: usize) -> Vec<f64> {
        let s = self.side as f64;
        self.multi_index(i).into_iter().map(|c| (c as f64 + 0.5) / s).collect()
    }

    /// Index of the level-`level` dyadic cell containing point `i`; cells of
    /// a level are numbered like the points of a grid with side `2^level`.
    pub fn cell_of(&self, i: usize, level: usize) -> usize {
        let shift = self.max_level() - level;
        let cells_side = 1usize << level;
        self.multi_index(i).iter().rev().fold(0, |acc, &c| acc * cells_side + (c >> shift))
    }

    /// Number of cells `2^(dim * level)` in the partition at `level`.
    pub fn cells_at(&self, level: usize) -> usize {
        1usize << (self.dim * level)
    }

    /// The grid as a Euclidean [`MetricSpace`]; no distance matrix is stored.
    pub fn to_space(&self) -> MetricSpace {
        let n = self.len();
        let mut coords = Vec::with_capacity(n * self.dim);
        for i in 0..n {
            coords.extend(self.coordinates(i));
        }
        MetricSpace::from_distinct_coordinates(self.dim, coords)
    }
}

/// Partial sums `S_k = sum_{i < k} d(x_i, x0)^p sqrt(r_i)` for `k = 1..=count`
/// (capped at the space size). The caller judges convergence.
pub fn summability_partial_sums<M: GroundMetric>(space: &M, r: &Measure, p: f64, count: usize) -> Result<Vec<f64>> {
    check_exponent(p)?;
    r.check_len(space.len())?;
    let x0 = space.base_point();
    let mut acc = 0.0;
    Ok((0..count.min(space.len()))
        .map(|i| {
            acc += space.cost(i, x0, p) * r.mass()[i].sqrt();
            acc
        })
        .collect())
}

/// A CDF discretised onto the points `k / m_bins` for `k` in `k_min..=k_max`.
#[derive(Debug, Clone, Serialize)]
pub struct BinnedCdf {
    pub k_min: i64,
    pub k_max: i64,
    pub m_bins: u32,
    pub measure: Measure,
    /// `F(k_min / M)`, folded into the first bin.
    pub residual_low: f64,
    /// `1 - F((k_max + 1) / M)`, folded into the last bin.
    pub residual_high: f64,
}

impl BinnedCdf {
    pub fn locations(&self) -> Vec<f64> {
        (self.k_min..=self.k_max).map(|k| k as f64 / self.m_bins as f64).collect()
    }

    pub fn space(&self) -> MetricSpace {
        let coords = self.locations();
        let base = coords.iter().position(|&x| x == 0.0);
        let space = MetricSpace::from_distinct_coordinates(1, coords);
        match base {
            Some(b) => space.with_base_point(b).expect("index in range"),
            None => space,
        }
    }
}

/// Bins a CDF: `r_k = F((k+1)/M) - F(k/M)`, with the mass outside the range
/// added to the two boundary bins.
pub fn bin_cdf<F: Fn(f64) -> f64>(cdf: F, m_bins: u32, k_min: i64, k_max: i64) -> Result<BinnedCdf> {
    if m_bins == 0 {
        return Err(OtError::InvalidArgument("number of bins per unit must be positive".into()));
    }
    if k_max < k_min {
        return Err(OtError::InvalidArgument(format!("empty bin range {k_min}..={k_max}")));
    }
    let m = m_bins as f64;
    let values: Vec<(f64, f64)> = (k_min..=k_max + 1).map(|k| (k as f64 / m, cdf(k as f64 / m))).collect();
    for w in values.windows(2) {
        let ((x0, f0), (x1, f1)) = (w[0], w[1]);
        if !(f0.is_finite() && f1.is_finite()) || f1 < f0 || !(0.0..=1.0).contains(&f0) || !(0.0..=1.0).contains(&f1) {
            return Err(OtError::DecreasingCdf { x0, f0, x1, f1 });
        }
    }
    let mut mass: Vec<f64> = values.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let residual_low = values[0].1;
    let residual_high = 1.0 - values[values.len() - 1].1;
    mass[0] += residual_low;
    let last = mass.len() - 1;
    mass[last] += residual_high;
    Ok(BinnedCdf { k_min, k_max, m_bins, measure: Measure::probability(mass)?, residual_low, residual_high })
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(OtError::InvalidExponent(p))
    }
}
