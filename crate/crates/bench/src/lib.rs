//! Instance generators shared by the benchmarks.

use otlimits::{GridSpace, Measure, MetricSpace, WeightedTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniform points in the unit square.
pub fn plane(n: usize, seed: u64) -> MetricSpace {
    let mut rng = rng(seed);
    let points = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    MetricSpace::from_coordinates(points).expect("valid points")
}

/// A probability vector with every entry positive.
pub fn measure(n: usize, seed: u64) -> Measure {
    let mut rng = rng(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    Measure::from_weights(&weights).expect("positive weights")
}

/// A random recursive tree on `n` nodes rooted at 0.
pub fn tree(n: usize, seed: u64) -> WeightedTree {
    let mut rng = rng(seed);
    let parent = (0..n).map(|i| if i == 0 { 0 } else { rng.random_range(0..i) }).collect();
    let weight = (0..n).map(|i| if i == 0 { 0.0 } else { rng.random_range(0.1..1.0) }).collect();
    WeightedTree::new(parent, weight).expect("valid tree")
}

/// A sum-zero vector of length `n`.
pub fn signed(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    u
}

/// Two smooth bumps on a grid, centred at `a` and `b`.
pub fn grid_pair(grid: &GridSpace, a: [f64; 2], b: [f64; 2], width: f64) -> (Measure, Measure) {
    let bump = |c: [f64; 2]| {
        let w: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.coordinates(i);
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                (-d2 / (2.0 * width * width)).exp() + 1e-3
            })
            .collect();
        Measure::from_weights(&w).expect("positive weights")
    };
    (bump(a), bump(b))
}
