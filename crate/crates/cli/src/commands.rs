use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use otlimits::io::{read_mass_file, write_draws_csv, write_dual_csv, write_ecdf_csv, write_mass_csv, write_plan_csv, write_sweep_csv};
use otlimits::limits::default_truncation_budget;
use otlimits::measures::empirical_from_counts;
use otlimits::tree::grid_bound_power;
use otlimits::{
    bin_cdf, one_sample_test, simulate_alt_limit, simulate_null_limit, spanning_tree, threshold_sweep,
    thresholded_wasserstein, two_sample_test, wasserstein, AltLimitConfig, GridSpace, LimitMethod, LimitSample,
    LimitStructure, Measure, NullLimitConfig, OtError, SpanningStrategy, TestConfig, TestMethod, ThresholdedMetric,
    Transport,
};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Exp, Normal};

use crate::inputs::{image, image_pair, parse_threshold, Structure};
use crate::{warn, MethodArg, StructureArgs};

fn invalid(message: impl Into<String>) -> anyhow::Error {
    OtError::InvalidArgument(message.into()).into()
}

fn write_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(path) => {
            let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            writeln!(f, "{text}")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn warn_grid_exponent(method: MethodArg, p: f64) {
    if method == MethodArg::Grid && p > 1.0 {
        warn(&format!(
            "the dyadic-grid bound dominates the exact limit only for p <= 1; with p = {p} the test may exceed its nominal level"
        ));
    }
}

#[derive(Args, Debug)]
pub struct DistArgs {
    #[command(flatten)]
    structure: StructureArgs,
    /// First measure (`id,mass` CSV or JSON).
    #[arg(long)]
    r: Option<PathBuf>,
    /// Second measure.
    #[arg(long)]
    s: Option<PathBuf>,
    /// First sample as a list of point ids (instead of --r).
    #[arg(long, conflicts_with = "r")]
    x: Option<PathBuf>,
    /// Second sample as a list of point ids (instead of --s).
    #[arg(long, conflicts_with = "s")]
    y: Option<PathBuf>,
    /// First image (PGM or CSV counts); the grid comes from the image.
    #[arg(long, requires = "y_image", conflicts_with_all = ["r", "x", "space", "tree", "grid_side"])]
    x_image: Option<PathBuf>,
    #[arg(long, requires = "x_image")]
    y_image: Option<PathBuf>,
    #[arg(long)]
    p: f64,
    /// Threshold for the additional distance under min(d, t).
    #[arg(long, value_parser = parse_threshold)]
    t: Option<f64>,
    /// Skip the plain distance and report only the thresholded one.
    #[arg(long, requires = "t")]
    only_thresholded: bool,
    /// Write the optimal plan as CSV.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Write the optimal dual potentials as CSV.
    #[arg(long)]
    dual: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

fn measure_or_sample(structure: &Structure, mass: Option<&PathBuf>, sample: Option<&PathBuf>, what: &str) -> Result<Measure> {
    match sample {
        Some(path) => Ok(empirical_from_counts(&structure.sample_counts(path)?)?),
        None => structure.measure(mass.map(PathBuf::as_path), what),
    }
}

pub fn dist(args: DistArgs) -> Result<()> {
    let (structure, r, s) = match (&args.x_image, &args.y_image) {
        (Some(x), Some(y)) => {
            let (grid, cx, cy) = image_pair(x, y)?;
            (Structure::from_grid(grid), empirical_from_counts(&cx)?, empirical_from_counts(&cy)?)
        }
        _ => {
            let structure = Structure::load(&args.structure)?;
            let r = measure_or_sample(&structure, args.r.as_ref(), args.x.as_ref(), "r")?;
            let s = measure_or_sample(&structure, args.s.as_ref(), args.y.as_ref(), "s")?;
            (structure, r, s)
        }
    };
    let space = structure.space();
    let plain = if args.only_thresholded { None } else { Some(wasserstein(space, &r, &s, args.p)?) };
    let thresholded = match args.t {
        Some(t) => Some(thresholded_wasserstein(&ThresholdedMetric::new(space.clone(), t)?, &r, &s, args.p)?),
        None => None,
    };
    let shown: &Transport = plain.as_ref().or(thresholded.as_ref()).expect("at least one distance");
    if let Some(path) = &args.plan {
        write_plan_csv(create(path)?, space.ids(), &shown.plan)?;
    }
    if let Some(path) = &args.dual {
        write_dual_csv(create(path)?, space.ids(), &shown.dual)?;
    }
    let report = json!({
        "p": args.p,
        "distance": plain.as_ref().map(|w| w.distance),
        "cost": plain.as_ref().map(|w| w.cost),
        "duality_gap": plain.as_ref().map(|w| w.gap),
        "t": args.t,
        "thresholded_distance": thresholded.as_ref().map(|w| w.distance),
        "thresholded_cost": thresholded.as_ref().map(|w| w.cost),
        "thresholded_duality_gap": thresholded.as_ref().map(|w| w.gap),
    });
    write_json(&report, args.output.as_deref())
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanningArg {
    Mst,
    Star,
}

#[derive(Args, Debug)]
pub struct LimitSimArgs {
    #[command(flatten)]
    structure: StructureArgs,
    /// Image whose normalised counts give r; the grid comes from the image.
    #[arg(long, conflicts_with_all = ["space", "tree", "grid_side", "r"])]
    image: Option<PathBuf>,
    /// The measure r (default: the masses column of the points file).
    #[arg(long)]
    r: Option<PathBuf>,
    /// A second measure s != r: simulate the alternative limit instead.
    #[arg(long, conflicts_with = "image")]
    s: Option<PathBuf>,
    /// Limiting share n/(n+m) of the first sample, for the alternative limit.
    #[arg(long, default_value_t = 1.0, requires = "s")]
    share: f64,
    #[arg(long)]
    p: f64,
    /// Simulate under the thresholded metric min(d, t) (exact method).
    #[arg(long, value_parser = parse_threshold)]
    t: Option<f64>,
    /// Number of Monte Carlo draws.
    #[arg(long = "M", short = 'M', default_value_t = otlimits::limits::DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Spanning tree for the tree method on a point set.
    #[arg(long, value_enum, default_value = "mst")]
    spanning: SpanningArg,
    /// Truncate the support to meet this tail-bound budget (exact method).
    #[arg(long, conflicts_with = "truncate_default")]
    truncate: Option<f64>,
    /// Truncate with the default budget 1e-3 * sum d^p(x, x0) r_x.
    #[arg(long)]
    truncate_default: bool,
    /// Where to write the draws as CSV (default: next to -o).
    #[arg(long)]
    draws_out: Option<PathBuf>,
    /// Write the ECDF step points as CSV.
    #[arg(long)]
    ecdf: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

fn sample_summary(sample: &LimitSample) -> Value {
    let quantiles: Value = if sample.len() >= otlimits::limits::MIN_QUANTILE_DRAWS {
        [0.5, 0.9, 0.95, 0.99]
            .iter()
            .map(|&q| (q.to_string(), json!(sample.quantile(q).ok())))
            .collect::<serde_json::Map<_, _>>()
            .into()
    } else {
        Value::Null
    };
    json!({ "mean": sample.mean(), "quantiles": quantiles })
}

pub fn limit_sim(args: LimitSimArgs) -> Result<()> {
    warn_grid_exponent(args.method, args.p);
    let (structure, r) = match &args.image {
        Some(path) => {
            let counts = image(path)?;
            let r = counts.measure()?;
            (Structure::from_grid(counts.grid), r)
        }
        None => {
            let structure = Structure::load(&args.structure)?;
            let r = structure.measure(args.r.as_deref(), "r")?;
            (structure, r)
        }
    };
    let method = match args.method {
        MethodArg::Exact => LimitMethod::ExactFlow,
        MethodArg::Tree => LimitMethod::TreeClosedForm,
        MethodArg::Grid => LimitMethod::GridBound,
    };
    let sample = match &args.s {
        Some(s_path) => {
            if args.method != MethodArg::Exact || args.t.is_some() || args.truncate.is_some() || args.truncate_default {
                return Err(invalid("the alternative limit supports only the exact method without threshold or truncation"));
            }
            let s = structure.measure(Some(s_path), "s")?;
            let cfg = AltLimitConfig { p: args.p, draws: args.draws, seed: args.seed, alpha: args.share };
            simulate_alt_limit(structure.space(), &r, &s, &cfg)?
        }
        None => {
            let mut cfg = NullLimitConfig::new(args.p, args.draws, method, args.seed);
            cfg.truncation = if args.truncate_default {
                Some(default_truncation_budget(structure.space(), &r, args.p))
            } else {
                args.truncate
            };
            let spanning;
            let thresholded;
            let limit_structure = match (args.t, args.method, &structure) {
                (Some(_), m, _) if m != MethodArg::Exact => {
                    return Err(invalid("--t applies to the exact method only"));
                }
                (Some(t), _, _) => {
                    thresholded = ThresholdedMetric::new(structure.space().clone(), t)?;
                    LimitStructure::Thresholded(&thresholded)
                }
                (None, MethodArg::Tree, Structure::Space { space, .. }) => {
                    let strategy = match args.spanning {
                        SpanningArg::Mst => SpanningStrategy::Mst,
                        SpanningArg::Star => SpanningStrategy::Star { root: otlimits::GroundMetric::base_point(space) },
                    };
                    spanning = spanning_tree(space, &strategy)?;
                    LimitStructure::Tree(&spanning)
                }
                _ => structure.limit_structure(),
            };
            simulate_null_limit(limit_structure, &r, &cfg)?
        }
    };
    let draws_path = args.draws_out.clone().or_else(|| args.output.as_ref().map(|o| o.with_extension("draws.csv")));
    if let Some(path) = &draws_path {
        write_draws_csv(create(path)?, &sample)?;
    }
    if let Some(path) = &args.ecdf {
        write_ecdf_csv(create(path)?, &sample)?;
    }
    let mut report = json!({
        "kind": sample.kind,
        "p": sample.p,
        "scaling": sample.scaling,
        "seed": sample.seed,
        "M": sample.len(),
        "method": args.method.to_possible_value().map(|v| v.get_name().to_string()),
        "t": args.t,
        "draws_path": draws_path.as_ref().map(|p| p.display().to_string()),
        "truncation": sample.truncation,
        "summary": sample_summary(&sample),
    });
    if draws_path.is_none() {
        report["draws"] = json!(sample.draws);
    }
    write_json(&report, args.output.as_deref())
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    structure: StructureArgs,
    /// Hypothesised measure for a one-sample test.
    #[arg(long, conflicts_with_all = ["y", "y_image"])]
    r0: Option<PathBuf>,
    /// First sample: a list of observed point ids.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Second sample, for a two-sample test.
    #[arg(long)]
    y: Option<PathBuf>,
    /// First sample as an image of counts; the grid comes from the image.
    #[arg(long, conflicts_with_all = ["x", "space", "tree", "grid_side"])]
    x_image: Option<PathBuf>,
    #[arg(long, requires = "x_image", conflicts_with = "y")]
    y_image: Option<PathBuf>,
    #[command(flatten)]
    common: TestCommon,
    /// Threshold t for the statistic W_p under min(d, t).
    #[arg(long, value_parser = parse_threshold)]
    t: Option<f64>,
}

#[derive(Args, Debug)]
struct TestCommon {
    #[arg(long)]
    p: f64,
    #[arg(long = "M", short = 'M', default_value_t = otlimits::limits::DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Significance level.
    #[arg(long, default_value_t = otlimits::testing::DEFAULT_SIGNIFICANCE)]
    alpha: f64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

impl TestCommon {
    fn config(&self) -> TestConfig {
        TestConfig::new(self.p, TestMethod::from(self.method), self.draws, self.seed).with_significance(self.alpha)
    }
}

/// The structure and the one or two count vectors of a test.
fn test_inputs(
    structure: &StructureArgs,
    x: Option<&PathBuf>,
    y: Option<&PathBuf>,
    x_image: Option<&PathBuf>,
    y_image: Option<&PathBuf>,
) -> Result<(Structure, Vec<u64>, Option<Vec<u64>>)> {
    match (x_image, y_image) {
        (Some(xi), Some(yi)) => {
            let (grid, cx, cy) = image_pair(xi, yi)?;
            Ok((Structure::from_grid(grid), cx, Some(cy)))
        }
        (Some(xi), None) => {
            let counts = image(xi)?;
            Ok((Structure::from_grid(counts.grid), counts.counts, None))
        }
        _ => {
            let structure = Structure::load(structure)?;
            let x = x.ok_or_else(|| invalid("a first sample (--x or --x-image) is required"))?;
            let cx = structure.sample_counts(x)?;
            let cy = y.map(|y| structure.sample_counts(y)).transpose()?;
            Ok((structure, cx, cy))
        }
    }
}

pub fn test(args: TestArgs) -> Result<()> {
    warn_grid_exponent(args.common.method, args.common.p);
    let (structure, cx, cy) =
        test_inputs(&args.structure, args.x.as_ref(), args.y.as_ref(), args.x_image.as_ref(), args.y_image.as_ref())?;
    let mut config = args.common.config();
    config.t = args.t;
    let report = match (&args.r0, cy) {
        (Some(r0), None) => {
            let r0 = structure.measure(Some(r0), "r0")?;
            one_sample_test(structure.test_structure(), &r0, &cx, &config)?
        }
        (None, Some(cy)) => two_sample_test(structure.test_structure(), &cx, &cy, &config)?,
        (None, None) => return Err(invalid("give --r0 for a one-sample test or a second sample for a two-sample test")),
        (Some(_), Some(_)) => unreachable!("clap rejects --r0 with a second sample"),
    };
    write_json(&report, args.common.output.as_deref())
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    structure: StructureArgs,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long, required_unless_present = "y_image")]
    y: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["x", "space", "tree", "grid_side"])]
    x_image: Option<PathBuf>,
    #[arg(long, requires = "x_image", conflicts_with = "y")]
    y_image: Option<PathBuf>,
    /// Thresholds, comma separated; fractions such as 5/256 are accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_threshold, required = true)]
    thresholds: Vec<f64>,
    /// Write `t,statistic,p_value,reject` rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: TestCommon,
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    warn_grid_exponent(args.common.method, args.common.p);
    let (structure, cx, cy) =
        test_inputs(&args.structure, args.x.as_ref(), args.y.as_ref(), args.x_image.as_ref(), args.y_image.as_ref())?;
    let cy = cy.ok_or_else(|| invalid("a sweep needs two samples"))?;
    let reports = threshold_sweep(structure.test_structure(), &cx, &cy, &args.thresholds, &args.common.config())?;
    if let Some(path) = &args.csv {
        write_sweep_csv(create(path)?, &reports)?;
    }
    write_json(&reports, args.common.output.as_deref())
}

#[derive(Args, Debug)]
pub struct GridBoundArgs {
    /// Points per side of the grid (power of two).
    #[arg(long)]
    side: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Signed vector as `index,value` CSV (or JSON `{ids, mass}`); missing
    /// indices are zero. Index `i` is the point with multi-index digits of
    /// `i` in base `side`, first coordinate fastest.
    #[arg(long)]
    u: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

pub fn grid_bound(args: GridBoundArgs) -> Result<()> {
    let grid = GridSpace::new(args.dim, args.side)?;
    let table = read_mass_file(&args.u).with_context(|| format!("reading {}", args.u.display()))?;
    let mut u = vec![0.0; grid.len()];
    for (id, &v) in table.ids.iter().zip(&table.mass) {
        let i: usize = id.parse().map_err(|_| OtError::UnknownId(id.clone()))?;
        if i >= u.len() {
            bail!(OtError::IndexOutOfRange { index: i, len: u.len() });
        }
        u[i] += v;
    }
    let total: f64 = u.iter().sum();
    let scale: f64 = u.iter().map(|v| v.abs()).sum();
    if total.abs() > 1e-9 * scale.max(1.0) {
        warn(&format!("the vector sums to {total}; the formula then includes a root-cell term"));
    }
    let power = grid_bound_power(&grid, &u, args.p)?;
    let report = json!({
        "dim": args.dim,
        "side": args.side,
        "levels": grid.max_level(),
        "p": args.p,
        "sum": total,
        "power": power,
        "statistic": power.powf(1.0 / args.p),
    });
    write_json(&report, args.output.as_deref())
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Normal,
    Exponential,
    Uniform,
}

#[derive(Args, Debug)]
pub struct BinArgs {
    /// Parametric distribution to bin.
    #[arg(long, value_enum, required_unless_present = "cdf")]
    family: Option<Family>,
    /// CSV of `x,F(x)` knots, linearly interpolated (flat outside).
    #[arg(long, conflicts_with = "family")]
    cdf: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    sd: f64,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 0.0)]
    low: f64,
    #[arg(long, default_value_t = 1.0)]
    high: f64,
    /// Bins per unit length M.
    #[arg(long)]
    bins: u32,
    #[arg(long, allow_negative_numbers = true)]
    k_min: i64,
    #[arg(long, allow_negative_numbers = true)]
    k_max: i64,
    /// Write the binned measure as a points CSV `id,x,mass`.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Write the binned measure as `id,mass` CSV.
    #[arg(long)]
    mass: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

fn knots(path: &Path) -> Result<Vec<(f64, f64)>> {
    let table = read_mass_file(path).with_context(|| format!("reading {}", path.display()))?;
    let mut knots = Vec::with_capacity(table.ids.len());
    for (x, &f) in table.ids.iter().zip(&table.mass) {
        let x: f64 = x.parse().map_err(|_| OtError::Parse(format!("knot location {x:?} is not a number")))?;
        knots.push((x, f));
    }
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    if knots.is_empty() {
        bail!(OtError::Parse("no knots in the cdf file".into()));
    }
    Ok(knots)
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 <= x);
    if i == 0 {
        return knots[0].1;
    }
    if i == knots.len() {
        return knots[i - 1].1;
    }
    let ((x0, f0), (x1, f1)) = (knots[i - 1], knots[i]);
    f0 + (f1 - f0) * (x - x0) / (x1 - x0)
}

pub fn bin(args: BinArgs) -> Result<()> {
    let binned = match (&args.cdf, args.family) {
        (Some(path), _) => {
            let knots = knots(path)?;
            bin_cdf(|x| interpolate(&knots, x), args.bins, args.k_min, args.k_max)?
        }
        (None, Some(Family::Normal)) => {
            let d = Normal::new(args.mean, args.sd).map_err(|e| invalid(e.to_string()))?;
            bin_cdf(|x| d.cdf(x), args.bins, args.k_min, args.k_max)?
        }
        (None, Some(Family::Exponential)) => {
            let d = Exp::new(args.rate).map_err(|e| invalid(e.to_string()))?;
            bin_cdf(|x| d.cdf(x), args.bins, args.k_min, args.k_max)?
        }
        (None, Some(Family::Uniform)) => {
            if args.low.is_nan() || args.high.is_nan() || args.low >= args.high {
                return Err(invalid("--low must be below --high"));
            }
            let (a, b) = (args.low, args.high);
            bin_cdf(|x| ((x - a) / (b - a)).clamp(0.0, 1.0), args.bins, args.k_min, args.k_max)?
        }
        (None, None) => unreachable!("clap requires --family or --cdf"),
    };
    let locations = binned.locations();
    let ids: Vec<String> = (binned.k_min..=binned.k_max).map(|k| k.to_string()).collect();
    if let Some(path) = &args.points {
        let mut w = create(path)?;
        writeln!(w, "id,x,mass")?;
        for ((id, x), m) in ids.iter().zip(&locations).zip(binned.measure.mass()) {
            writeln!(w, "{id},{x},{m}")?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.mass {
        write_mass_csv(create(path)?, &ids, binned.measure.mass())?;
    }
    let report = json!({
        "bins_per_unit": binned.m_bins,
        "k_min": binned.k_min,
        "k_max": binned.k_max,
        "locations": locations,
        "mass": binned.measure.mass(),
        "residual_low": binned.residual_low,
        "residual_high": binned.residual_high,
    });
    write_json(&report, args.output.as_deref())
}
