//! Monte Carlo simulation of the limit laws of the empirical Wasserstein
//! distance, finite truncation of the support, and quantiles.
//!
//! Draw `j` of a run with master seed `seed` uses its own random stream
//! (`stream_rng(seed, j)`), so results do not depend on the thread count and
//! different methods run with the same seed see the same Gaussian vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::measures::{sample_gaussian_stream, GaussianDraw, Measure};
use crate::solver::{dual_face_max, limit_flow, thresholded_limit_flow, wasserstein};
use crate::space::{check_exponent, GridSpace, GroundMetric, MetricSpace, ThresholdedMetric};
use crate::tree::{grid_bound_statistic, WeightedTree};

pub const DEFAULT_DRAWS: usize = 10_000;

/// Smallest sample for which [`LimitSample::quantile`] answers.
pub const MIN_QUANTILE_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    NullExactFlow,
    NullTree,
    NullGridBound,
    AltDualFace,
}

/// The factor that turns an empirical distance into the statistic this
/// sample is the limit of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rate", rename_all = "snake_case")]
pub enum Scaling {
    /// The bare limit; sample sizes not attached.
    Unscaled,
    /// `n^(1/2p) W_p(r_n, r)`.
    OneSampleNull { n: u64 },
    /// `(nm/(n+m))^(1/2p) W_p(r_n, s_m)`.
    TwoSampleNull { n: u64, m: u64 },
    /// `sqrt(n) (W_p(r_n, s) - W_p(r, s))`.
    OneSampleAlt { n: u64 },
    /// `sqrt(nm/(n+m)) (W_p(r_n, s_m) - W_p(r, s))`.
    TwoSampleAlt { n: u64, m: u64 },
}

impl Scaling {
    pub fn factor(&self, p: f64) -> f64 {
        match *self {
            Scaling::Unscaled => 1.0,
            Scaling::OneSampleNull { n } => (n as f64).powf(0.5 / p),
            Scaling::TwoSampleNull { n, m } => two_sample_rate(n, m).powf(0.5 / p),
            Scaling::OneSampleAlt { n } => (n as f64).sqrt(),
            Scaling::TwoSampleAlt { n, m } => two_sample_rate(n, m).sqrt(),
        }
    }
}

/// `nm / (n + m)`.
pub fn two_sample_rate(n: u64, m: u64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    n * m / (n + m)
}

/// Summary of the support truncation a sample was simulated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub retained_points: usize,
    pub retained_mass: f64,
    pub tail_bound: f64,
    pub budget: f64,
    pub reached: bool,
}

/// Sorted Monte Carlo draws of a limit law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub kind: StatisticKind,
    pub p: f64,
    pub scaling: Scaling,
    pub seed: u64,
    pub draws: Vec<f64>,
    pub truncation: Option<TruncationReport>,
}

impl LimitSample {
    fn from_draws(kind: StatisticKind, p: f64, seed: u64, mut draws: Vec<f64>) -> Self {
        draws.sort_by(f64::total_cmp);
        Self { kind, p, scaling: Scaling::Unscaled, seed, draws, truncation: None }
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Type-1 quantile: the `ceil(q M)`-th smallest draw.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(OtError::InvalidQuantile(q));
        }
        let m = self.draws.len();
        if m < MIN_QUANTILE_DRAWS {
            return Err(OtError::TooFewDraws { min: MIN_QUANTILE_DRAWS, got: m });
        }
        let qm = q * m as f64;
        // q M that is an integer up to rounding must not be pushed up by ceil
        let rank = if (qm - qm.round()).abs() < 1e-9 { qm.round() } else { qm.ceil() };
        let rank = (rank as usize).clamp(1, m);
        Ok(self.draws[rank - 1])
    }

    /// Fraction of draws `<= x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        if self.draws.is_empty() {
            return f64::NAN;
        }
        self.draws.partition_point(|&d| d <= x) as f64 / self.draws.len() as f64
    }

    /// Step points `(x_(i), i / M)` of the empirical distribution function.
    pub fn ecdf_points(&self) -> Vec<(f64, f64)> {
        let m = self.draws.len() as f64;
        self.draws.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / m)).collect()
    }

    /// `(1 + #{draws >= statistic}) / (M + 1)`.
    pub fn p_value(&self, statistic: f64) -> f64 {
        let above = self.draws.len() - self.draws.partition_point(|&d| d < statistic);
        (1 + above) as f64 / (self.draws.len() + 1) as f64
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }
}

/// A finite index set `I` (containing the base point) on which Gaussian
/// draws are kept, with the star-tree bound on the first moment of the
/// discarded part: `sum_{x not in I} d(x, x0)^p sqrt(r_x (1 - r_x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    /// Retained indices, ascending.
    pub retained: Vec<usize>,
    pub retained_mass: f64,
    pub tail_bound: f64,
    pub budget: f64,
    /// Whether `tail_bound <= budget`.
    pub reached: bool,
}

impl TruncationPlan {
    pub fn report(&self) -> TruncationReport {
        TruncationReport {
            retained_points: self.retained.len(),
            retained_mass: self.retained_mass,
            tail_bound: self.tail_bound,
            budget: self.budget,
            reached: self.reached,
        }
    }

    /// `G` restricted to `I`, with the removed mass `-sum_{x in I} G_x`
    /// placed on the base point so the vector stays balanced. For duals
    /// pinned at the base point this leaves `<G^I, lambda>` unchanged.
    pub fn restrict_draw(&self, g: &GaussianDraw, base: usize) -> GaussianDraw {
        let mut values = vec![0.0; g.values.len()];
        for &x in &self.retained {
            values[x] = g.values[x];
        }
        let total: f64 = values.iter().sum();
        values[base] -= total;
        GaussianDraw { values, seed_path: g.seed_path }
    }
}

fn tail_contribution<M: GroundMetric>(space: &M, r: &Measure, p: f64, x: usize) -> f64 {
    let rx = r.mass()[x];
    space.cost(x, space.base_point(), p) * (rx * (1.0 - rx)).max(0.0).sqrt()
}

/// `sum_{x not in retained} d(x, x0)^p sqrt(r_x (1 - r_x))`.
pub fn star_tail_bound<M: GroundMetric>(space: &M, r: &Measure, p: f64, retained: &[usize]) -> Result<f64> {
    check_exponent(p)?;
    r.check_len(space.len())?;
    let mut keep = vec![false; space.len()];
    for &x in retained {
        if x >= keep.len() {
            return Err(OtError::IndexOutOfRange { index: x, len: keep.len() });
        }
        keep[x] = true;
    }
    Ok((0..space.len()).filter(|&x| !keep[x]).map(|x| tail_contribution(space, r, p, x)).sum())
}

/// `1e-3 * sum_x d(x, x0)^p r_x`.
pub fn default_truncation_budget<M: GroundMetric>(space: &M, r: &Measure, p: f64) -> f64 {
    let x0 = space.base_point();
    1e-3 * r.support().iter().map(|&x| space.cost(x, x0, p) * r.mass()[x]).sum::<f64>()
}

/// Greedy truncation: starting from `{x0}`, add support points by
/// decreasing `d(x, x0)^p sqrt(r_x (1 - r_x))` until the tail bound is at
/// most `budget`, or `max_points` points are retained. A zero budget keeps
/// the whole support.
pub fn truncate<M: GroundMetric>(
    space: &M,
    r: &Measure,
    p: f64,
    budget: f64,
    max_points: Option<usize>,
) -> Result<TruncationPlan> {
    check_exponent(p)?;
    r.require_probability()?;
    r.check_len(space.len())?;
    if budget.is_nan() || budget < 0.0 {
        return Err(OtError::InvalidArgument(format!("truncation budget must be nonnegative, got {budget}")));
    }
    let x0 = space.base_point();
    let mut ranked: Vec<(usize, f64)> = r
        .support()
        .into_iter()
        .filter(|&x| x != x0)
        .map(|x| (x, tail_contribution(space, r, p, x)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    // suffix[k] = bound when the first k ranked points are retained
    let mut suffix = vec![0.0; ranked.len() + 1];
    for k in (0..ranked.len()).rev() {
        suffix[k] = suffix[k + 1] + ranked[k].1;
    }
    let wanted = if budget == 0.0 { ranked.len() } else { suffix.iter().position(|&b| b <= budget).unwrap_or(ranked.len()) };
    let cap = max_points.map_or(usize::MAX, |c| c.max(1) - 1);
    let take = wanted.min(cap);

    let mut retained: Vec<usize> = std::iter::once(x0).chain(ranked[..take].iter().map(|&(x, _)| x)).collect();
    retained.sort_unstable();
    let retained_mass = retained.iter().map(|&x| r.mass()[x]).sum();
    let tail_bound = suffix[take];
    Ok(TruncationPlan { retained, retained_mass, tail_bound, budget, reached: tail_bound <= budget })
}

/// What the null limit is evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum LimitStructure<'a> {
    Space(&'a MetricSpace),
    Thresholded(&'a ThresholdedMetric),
    Tree(&'a WeightedTree),
    Grid(&'a GridSpace),
}

impl LimitStructure<'_> {
    fn name(&self) -> &'static str {
        match self {
            LimitStructure::Space(_) => "metric space",
            LimitStructure::Thresholded(_) => "thresholded metric",
            LimitStructure::Tree(_) => "tree",
            LimitStructure::Grid(_) => "grid",
        }
    }

    fn len(&self) -> usize {
        match self {
            LimitStructure::Space(s) => s.len(),
            LimitStructure::Thresholded(t) => t.len(),
            LimitStructure::Tree(t) => t.len(),
            LimitStructure::Grid(g) => g.len(),
        }
    }

    fn base_point(&self) -> usize {
        match self {
            LimitStructure::Space(s) => s.base_point(),
            LimitStructure::Thresholded(t) => t.base_point(),
            LimitStructure::Tree(t) => t.root(),
            LimitStructure::Grid(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    /// `max <G, lambda>^(1/p)` by network flow.
    ExactFlow,
    /// `Z_T,p(G)` on a tree.
    TreeClosedForm,
    /// The dyadic-grid upper bound.
    GridBound,
}

impl LimitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            LimitMethod::ExactFlow => "exact flow",
            LimitMethod::TreeClosedForm => "tree closed form",
            LimitMethod::GridBound => "grid bound",
        }
    }

    pub fn kind(&self) -> StatisticKind {
        match self {
            LimitMethod::ExactFlow => StatisticKind::NullExactFlow,
            LimitMethod::TreeClosedForm => StatisticKind::NullTree,
            LimitMethod::GridBound => StatisticKind::NullGridBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullLimitConfig {
    pub p: f64,
    pub draws: usize,
    pub method: LimitMethod,
    pub seed: u64,
    /// Truncation budget for the exact method; `None` keeps every point.
    pub truncation: Option<f64>,
}

impl NullLimitConfig {
    pub fn new(p: f64, draws: usize, method: LimitMethod, seed: u64) -> Self {
        Self { p, draws, method, seed, truncation: None }
    }
}

/// Evaluator for one draw, built once per run.
enum Evaluator {
    Flow(MetricSpace),
    BorrowedFlow,
    Thresholded,
    Tree,
    Grid,
}

/// Draws of the null limit in stream order (unsorted), together with the
/// truncation that was applied. Draw `j` uses `G` from stream `j`.
pub fn null_limit_draws(
    structure: LimitStructure<'_>,
    r: &Measure,
    config: &NullLimitConfig,
) -> Result<(Vec<f64>, Option<TruncationPlan>)> {
    let p = config.p;
    check_exponent(p)?;
    r.require_probability()?;
    r.check_len(structure.len())?;
    let mismatch = || OtError::MethodMismatch { method: config.method.name(), structure: structure.name() };
    let evaluator = match (config.method, &structure) {
        (LimitMethod::ExactFlow, LimitStructure::Space(_)) => Evaluator::BorrowedFlow,
        (LimitMethod::ExactFlow, LimitStructure::Thresholded(_)) => Evaluator::Thresholded,
        (LimitMethod::ExactFlow, LimitStructure::Tree(t)) => Evaluator::Flow(t.metric_space()?),
        (LimitMethod::ExactFlow, LimitStructure::Grid(g)) => Evaluator::Flow(g.to_space()),
        (LimitMethod::TreeClosedForm, LimitStructure::Tree(_)) => Evaluator::Tree,
        (LimitMethod::GridBound, LimitStructure::Grid(_)) => Evaluator::Grid,
        _ => return Err(mismatch()),
    };
    let truncation = match config.truncation {
        None => None,
        Some(budget) => {
            if config.method != LimitMethod::ExactFlow {
                return Err(OtError::InvalidArgument("truncation applies to the exact method only".into()));
            }
            let plan = match (&evaluator, &structure) {
                (Evaluator::Flow(space), _) => truncate(space, r, p, budget, None)?,
                (_, LimitStructure::Space(space)) => truncate(*space, r, p, budget, None)?,
                (_, LimitStructure::Thresholded(tm)) => truncate(*tm, r, p, budget, None)?,
                _ => unreachable!("exact method on an unsupported structure"),
            };
            Some(plan)
        }
    };
    let base = structure.base_point();

    let one = |j: usize| -> Result<f64> {
        let mut g = sample_gaussian_stream(r, config.seed, j as u64);
        if let Some(plan) = &truncation {
            g = plan.restrict_draw(&g, base);
        }
        match (&evaluator, &structure) {
            (Evaluator::Flow(space), _) => Ok(root(limit_flow(space, &g, p)?.value, p)),
            (Evaluator::BorrowedFlow, LimitStructure::Space(space)) => Ok(root(limit_flow(*space, &g, p)?.value, p)),
            (Evaluator::Thresholded, LimitStructure::Thresholded(tm)) => {
                Ok(root(thresholded_limit_flow(tm, &g, p)?.value, p))
            }
            (Evaluator::Tree, LimitStructure::Tree(t)) => Ok(t.z_statistic(&g.values, p)),
            (Evaluator::Grid, LimitStructure::Grid(grid)) => grid_bound_statistic(grid, &g.values, p),
            _ => unreachable!("evaluator built for another structure"),
        }
    };
    let draws = (0..config.draws).into_par_iter().map(one).collect::<Result<Vec<f64>>>()?;
    Ok((draws, truncation))
}

/// `M` draws of the null limit: `max_{lambda in S*} <G, lambda>^(1/p)`
/// (exact), `Z_T,p(G)` (tree) or the dyadic-grid bound, with
/// `G ~ N(0, Sigma(r))`. Sorted ascending.
pub fn simulate_null_limit(structure: LimitStructure<'_>, r: &Measure, config: &NullLimitConfig) -> Result<LimitSample> {
    let (draws, truncation) = null_limit_draws(structure, r, config)?;
    let mut sample = LimitSample::from_draws(config.method.kind(), config.p, config.seed, draws);
    sample.truncation = truncation.map(|plan| plan.report());
    Ok(sample)
}

fn root(value: f64, p: f64) -> f64 {
    if p == 1.0 {
        value
    } else {
        value.max(0.0).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltLimitConfig {
    pub p: f64,
    pub draws: usize,
    pub seed: u64,
    /// Limiting share `n / (n + m)`; `1` gives the one-sample limit.
    pub alpha: f64,
}

/// `M` draws of the limit under `r != s`:
/// `(1/p) W_p(r, s)^(1-p) max {sqrt(alpha) <G, lambda> + sqrt(1-alpha) <H, mu>}`
/// over the dual-optimal face, with independent `G ~ N(0, Sigma(r))` and
/// `H ~ N(0, Sigma(s))`. With `alpha = 1` no `H` is drawn. Draw `j` uses
/// streams `2j` (for `G`) and `2j + 1` (for `H`).
pub fn simulate_alt_limit<M: GroundMetric>(
    space: &M,
    r: &Measure,
    s: &Measure,
    config: &AltLimitConfig,
) -> Result<LimitSample> {
    let p = config.p;
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(OtError::InvalidArgument(format!("alpha must lie in [0, 1], got {}", config.alpha)));
    }
    let transport = wasserstein(space, r, s, p)?;
    if transport.cost <= 0.0 || r.mass() == s.mass() {
        return Err(OtError::IdenticalMeasures);
    }
    let prefactor = if p == 1.0 { 1.0 } else { transport.distance.powf(1.0 - p) / p };
    let one = |j: usize| -> Result<f64> {
        let j = j as u64;
        let g = sample_gaussian_stream(r, config.seed, 2 * j);
        let h = (config.alpha < 1.0).then(|| sample_gaussian_stream(s, config.seed, 2 * j + 1));
        let face = dual_face_max(space, r, s, p, &transport, &g, h.as_ref(), config.alpha)?;
        Ok(prefactor * face.value)
    };
    let draws = (0..config.draws).into_par_iter().map(one).collect::<Result<Vec<f64>>>()?;
    Ok(LimitSample::from_draws(StatisticKind::AltDualFace, p, config.seed, draws))
}
