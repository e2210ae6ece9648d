//! Empirical optimal transport on finite metric spaces: exact `W_p`
//! distances by network flow, Monte Carlo simulation of their limit laws
//! (exact, tree closed form and tree/grid upper bounds), and one- and
//! two-sample tests built on them.

pub mod error;
pub mod flow;
pub mod io;
pub mod limits;
pub mod measures;
pub mod solver;
pub mod space;
pub mod testing;
pub mod tree;

pub use error::{OtError, Result};
pub use limits::{
    simulate_alt_limit, simulate_null_limit, truncate, AltLimitConfig, LimitMethod, LimitSample, LimitStructure,
    NullLimitConfig, Scaling, StatisticKind, TruncationPlan,
};
pub use measures::{GaussianDraw, Measure, MeasureKind};
pub use solver::{
    dual_face_max, limit_flow, thresholded_limit_flow, thresholded_wasserstein, wasserstein, DualPair, LimitFlow,
    Transport, TransportPlan,
};
pub use space::{bin_cdf, BinnedCdf, DistanceSource, GridSpace, GroundMetric, MetricSpace, ThresholdedMetric};
pub use testing::{one_sample_test, threshold_sweep, two_sample_test, TestConfig, TestMethod, TestReport, TestStructure};
pub use tree::{grid_bound_statistic, spanning_tree, DyadicTree, SpanningStrategy, WeightedTree};
