//! One- and two-sample tests for equality of distributions.
//!
//! The statistic is the scaled empirical distance (optionally under the
//! thresholded metric `min(d, t)`), compared with Monte Carlo draws of a
//! null limit: the exact one, the closed form on a tree metric, or an upper
//! bound from a spanning tree or the dyadic grid. Because thresholding only
//! lowers the statistic and the bounds only raise the limit, the bound
//! methods give conservative tests.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::limits::{simulate_null_limit, two_sample_rate, LimitMethod, LimitSample, LimitStructure, NullLimitConfig, Scaling, StatisticKind};
use crate::measures::{empirical_from_counts, Measure};
use crate::solver::{thresholded_wasserstein, wasserstein};
use crate::space::{check_exponent, GridSpace, GroundMetric, MetricSpace, ThresholdedMetric};
use crate::tree::{spanning_tree, SpanningStrategy, WeightedTree};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// The space a test runs on.
#[derive(Debug, Clone, Copy)]
pub enum TestStructure<'a> {
    Space(&'a MetricSpace),
    Tree(&'a WeightedTree),
    Grid(&'a GridSpace),
}

/// Which null limit the statistic is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// The exact limit by network flow.
    Exact,
    /// `Z_T,p` of the tree itself, or of a minimum spanning tree of a
    /// general space (an upper bound there).
    Tree,
    /// The dyadic-grid upper bound.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub p: f64,
    /// Threshold for the statistic; `None` uses the plain metric.
    pub t: Option<f64>,
    pub draws: usize,
    pub seed: u64,
    pub alpha_sig: f64,
    pub method: TestMethod,
}

impl TestConfig {
    pub fn new(p: f64, method: TestMethod, draws: usize, seed: u64) -> Self {
        Self { p, t: None, draws, seed, alpha_sig: DEFAULT_SIGNIFICANCE, method }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_significance(mut self, alpha_sig: f64) -> Self {
        self.alpha_sig = alpha_sig;
        self
    }
}

/// Which measure fed the covariance of the simulated null limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMeasure {
    Hypothesised,
    /// Pooled empirical measure standing in for the unknown common law.
    PooledEmpirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// Scaled distance compared with the limit draws.
    pub statistic: f64,
    /// Unscaled (possibly thresholded) empirical distance.
    pub distance: f64,
    pub n: u64,
    pub m: Option<u64>,
    pub p: f64,
    pub t: Option<f64>,
    pub method: TestMethod,
    pub limit_kind: StatisticKind,
    pub null_measure: NullMeasure,
    pub draws: usize,
    pub seed: u64,
    pub alpha_sig: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Not serialised, so identical runs give identical reports.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

fn check_config(config: &TestConfig) -> Result<()> {
    check_exponent(config.p)?;
    if let Some(t) = config.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(OtError::InvalidThreshold(t));
        }
    }
    if !(config.alpha_sig > 0.0 && config.alpha_sig < 1.0) {
        return Err(OtError::InvalidArgument(format!("significance level must lie in (0, 1), got {}", config.alpha_sig)));
    }
    Ok(())
}

/// Ground metric of a structure, materialised once per test.
struct Ground {
    space: MetricSpace,
}

impl Ground {
    fn of(structure: TestStructure<'_>) -> Result<Self> {
        let space = match structure {
            TestStructure::Space(s) => s.clone(),
            TestStructure::Tree(t) => t.metric_space()?,
            TestStructure::Grid(g) => g.to_space(),
        };
        Ok(Self { space })
    }

    /// `W_p(a, b)`, or `W_p` under `min(d, t)`, computed on the union of the
    /// two supports.
    fn distance(&self, a: &Measure, b: &Measure, p: f64, t: Option<f64>) -> Result<f64> {
        let n = self.space.len();
        a.check_len(n)?;
        b.check_len(n)?;
        let keep: Vec<usize> = (0..n).filter(|&x| a.mass()[x] > 0.0 || b.mass()[x] > 0.0).collect();
        let sub = self.space.subspace(&keep)?;
        let (a, b) = (a.restrict(&keep)?, b.restrict(&keep)?);
        let transport = match t {
            Some(t) => thresholded_wasserstein(&ThresholdedMetric::new(sub, t)?, &a, &b, p)?,
            None => wasserstein(&sub, &a, &b, p)?,
        };
        Ok(transport.distance)
    }
}

/// Simulates the null limit for `method` on `structure` under `r`.
fn null_sample(structure: TestStructure<'_>, ground: &Ground, r: &Measure, config: &TestConfig) -> Result<LimitSample> {
    let p = config.p;
    let mismatch = |structure: &'static str| OtError::MethodMismatch { method: method_name(config.method), structure };
    match (config.method, structure) {
        (TestMethod::Exact, _) => {
            let cfg = NullLimitConfig::new(p, config.draws, LimitMethod::ExactFlow, config.seed);
            match config.t {
                Some(t) => {
                    let tm = ThresholdedMetric::new(ground.space.clone(), t)?;
                    simulate_null_limit(LimitStructure::Thresholded(&tm), r, &cfg)
                }
                None => simulate_null_limit(LimitStructure::Space(&ground.space), r, &cfg),
            }
        }
        (TestMethod::Tree, TestStructure::Tree(tree)) => simulate_null_limit(
            LimitStructure::Tree(tree),
            r,
            &NullLimitConfig::new(p, config.draws, LimitMethod::TreeClosedForm, config.seed),
        ),
        (TestMethod::Tree, TestStructure::Space(space)) => {
            let tree = spanning_tree(space, &SpanningStrategy::Mst)?;
            simulate_null_limit(
                LimitStructure::Tree(&tree),
                r,
                &NullLimitConfig::new(p, config.draws, LimitMethod::TreeClosedForm, config.seed),
            )
        }
        (TestMethod::Grid, TestStructure::Grid(grid)) => simulate_null_limit(
            LimitStructure::Grid(grid),
            r,
            &NullLimitConfig::new(p, config.draws, LimitMethod::GridBound, config.seed),
        ),
        (TestMethod::Tree, TestStructure::Grid(_)) => Err(mismatch("grid")),
        (TestMethod::Grid, TestStructure::Space(_)) => Err(mismatch("metric space")),
        (TestMethod::Grid, TestStructure::Tree(_)) => Err(mismatch("tree")),
    }
}

fn method_name(method: TestMethod) -> &'static str {
    match method {
        TestMethod::Exact => "exact",
        TestMethod::Tree => "tree",
        TestMethod::Grid => "grid",
    }
}

fn structure_len(structure: TestStructure<'_>) -> usize {
    match structure {
        TestStructure::Space(s) => s.len(),
        TestStructure::Tree(t) => t.len(),
        TestStructure::Grid(g) => g.len(),
    }
}

fn counts_measure(counts: &[u64], len: usize) -> Result<(Measure, u64)> {
    if counts.len() != len {
        return Err(OtError::DimensionMismatch { expected: len, got: counts.len() });
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(OtError::EmptySample);
    }
    Ok((empirical_from_counts(counts)?, n))
}

#[allow(clippy::too_many_arguments)]
fn report(
    limit: &LimitSample,
    distance: f64,
    scale: f64,
    n: u64,
    m: Option<u64>,
    config: &TestConfig,
    null_measure: NullMeasure,
    start: Instant,
) -> Result<TestReport> {
    let statistic = scale * distance;
    let critical_value = limit.quantile(1.0 - config.alpha_sig)?;
    Ok(TestReport {
        statistic,
        distance,
        n,
        m,
        p: config.p,
        t: config.t,
        method: config.method,
        limit_kind: limit.kind,
        null_measure,
        draws: limit.len(),
        seed: config.seed,
        alpha_sig: config.alpha_sig,
        critical_value,
        p_value: limit.p_value(statistic),
        reject: statistic > critical_value,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Tests `H0: sample ~ r0` with `n^(1/2p) W_p(r_n, r0)`; `counts[x]` is the
/// number of observations at point `x`.
pub fn one_sample_test(structure: TestStructure<'_>, r0: &Measure, counts: &[u64], config: &TestConfig) -> Result<TestReport> {
    let start = Instant::now();
    check_config(config)?;
    r0.require_probability()?;
    let len = structure_len(structure);
    r0.check_len(len)?;
    let (empirical, n) = counts_measure(counts, len)?;
    let ground = Ground::of(structure)?;
    let distance = ground.distance(&empirical, r0, config.p, config.t)?;
    let limit = null_sample(structure, &ground, r0, config)?.with_scaling(Scaling::OneSampleNull { n });
    report(&limit, distance, limit.scaling.factor(config.p), n, None, config, NullMeasure::Hypothesised, start)
}

/// Tests `H0: r = s` from two samples with `(nm/(n+m))^(1/2p) W_p(r_n, s_m)`,
/// simulating the limit under the pooled empirical measure.
pub fn two_sample_test(structure: TestStructure<'_>, counts_x: &[u64], counts_y: &[u64], config: &TestConfig) -> Result<TestReport> {
    let start = Instant::now();
    check_config(config)?;
    let len = structure_len(structure);
    let (rx, n) = counts_measure(counts_x, len)?;
    let (ry, m) = counts_measure(counts_y, len)?;
    let ground = Ground::of(structure)?;
    let distance = ground.distance(&rx, &ry, config.p, config.t)?;
    let pooled = Measure::pooled(&rx, n, &ry, m)?;
    let limit = null_sample(structure, &ground, &pooled, config)?.with_scaling(Scaling::TwoSampleNull { n, m });
    report(&limit, distance, limit.scaling.factor(config.p), n, Some(m), config, NullMeasure::PooledEmpirical, start)
}

/// Two-sample tests for each threshold in `thresholds`. The tree and grid
/// bounds do not depend on `t`, so their limit sample is simulated once.
pub fn threshold_sweep(
    structure: TestStructure<'_>,
    counts_x: &[u64],
    counts_y: &[u64],
    thresholds: &[f64],
    config: &TestConfig,
) -> Result<Vec<TestReport>> {
    check_config(config)?;
    let len = structure_len(structure);
    let (rx, n) = counts_measure(counts_x, len)?;
    let (ry, m) = counts_measure(counts_y, len)?;
    let ground = Ground::of(structure)?;
    let pooled = Measure::pooled(&rx, n, &ry, m)?;
    let scaling = Scaling::TwoSampleNull { n, m };
    let shared = match config.method {
        TestMethod::Exact => None,
        _ => Some(null_sample(structure, &ground, &pooled, config)?.with_scaling(scaling)),
    };
    thresholds
        .iter()
        .map(|&t| {
            let start = Instant::now();
            let cfg = TestConfig { t: Some(t), ..config.clone() };
            check_config(&cfg)?;
            let distance = ground.distance(&rx, &ry, cfg.p, cfg.t)?;
            let limit = match &shared {
                Some(limit) => limit.clone(),
                None => null_sample(structure, &ground, &pooled, &cfg)?.with_scaling(scaling),
            };
            report(&limit, distance, scaling.factor(cfg.p), n, Some(m), &cfg, NullMeasure::PooledEmpirical, start)
        })
        .collect()
}

/// `(nm/(n+m))^(1/2p)`.
pub fn two_sample_scale(n: u64, m: u64, p: f64) -> f64 {
    two_sample_rate(n, m).powf(0.5 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> MetricSpace {
        MetricSpace::from_coordinates((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn exact_fit_gives_zero_statistic() {
        let space = line(4);
        let r0 = Measure::probability(vec![0.25; 4]).unwrap();
        let cfg = TestConfig::new(2.0, TestMethod::Exact, 200, 3);
        let rep = one_sample_test(TestStructure::Space(&space), &r0, &[5, 5, 5, 5], &cfg).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert_eq!(rep.p_value, 1.0);
        assert!(!rep.reject);
    }

    #[test]
    fn identical_samples() {
        let space = line(5);
        let counts = [3, 0, 4, 1, 2];
        let cfg = TestConfig::new(1.0, TestMethod::Tree, 200, 9);
        let rep = two_sample_test(TestStructure::Space(&space), &counts, &counts, &cfg).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert_eq!(rep.p_value, 1.0);
        assert_eq!(rep.null_measure, NullMeasure::PooledEmpirical);
    }

    #[test]
    fn empty_sample_is_an_error() {
        let space = line(3);
        let cfg = TestConfig::new(1.0, TestMethod::Exact, 200, 0);
        assert!(matches!(
            two_sample_test(TestStructure::Space(&space), &[0, 0, 0], &[1, 0, 0], &cfg),
            Err(OtError::EmptySample)
        ));
    }

    #[test]
    fn grid_method_needs_a_grid() {
        let space = line(3);
        let cfg = TestConfig::new(1.0, TestMethod::Grid, 200, 0);
        assert!(matches!(
            two_sample_test(TestStructure::Space(&space), &[1, 0, 0], &[0, 0, 1], &cfg),
            Err(OtError::MethodMismatch { .. })
        ));
    }

    #[test]
    fn report_serialises_without_wall_time() {
        let space = line(3);
        let cfg = TestConfig::new(1.0, TestMethod::Exact, 100, 0);
        let rep = two_sample_test(TestStructure::Space(&space), &[2, 1, 0], &[0, 1, 2], &cfg).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert!(!json.contains("wall_time"));
        assert!(json.contains("\"method\":\"exact\""));
    }
}
