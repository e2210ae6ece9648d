#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use otlimits::measures::jordan_decompose;
use otlimits::{
    dual_face_max, limit_flow, thresholded_limit_flow, thresholded_wasserstein, wasserstein, GaussianDraw, GroundMetric,
    Measure, MetricSpace, ThresholdedMetric,
};
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn median_distance(space: &MetricSpace) -> f64 {
    let n = space.len();
    let mut d: Vec<f64> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| space.dist(i, j)).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

fn thresholded_matrix(space: &MetricSpace, t: f64) -> Vec<Vec<f64>> {
    space.distance_matrix().into_iter().map(|row| row.into_iter().map(|v| v.min(t)).collect()).collect()
}

#[test]
fn simplex_oracle_sanity() {
    // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
    let rows = vec![
        Row { coef: vec![1.0, 1.0], rel: Rel::Le, rhs: 4.0 },
        Row { coef: vec![1.0, 3.0], rel: Rel::Le, rhs: 6.0 },
        Row { coef: vec![1.0, 0.0], rel: Rel::Le, rhs: 3.0 },
    ];
    assert!((maximize(&[3.0, 2.0], &rows).value() - 11.0).abs() < 1e-12);
    let infeasible = vec![
        Row { coef: vec![1.0], rel: Rel::Ge, rhs: 2.0 },
        Row { coef: vec![1.0], rel: Rel::Le, rhs: 1.0 },
    ];
    assert_eq!(maximize(&[1.0], &infeasible), LpOutcome::Infeasible);
}

#[test]
fn wasserstein_matches_dense_lp() {
    let mut rng = rng(11);
    for case in 0..60 {
        let n = rng.random_range(2..=7);
        let space = random_points(&mut rng, n, 2);
        let r = random_sparse_probability(&mut rng, n, 0.7);
        let s = random_sparse_probability(&mut rng, n, 0.7);
        let p = [0.5, 1.0, 2.0, 3.0][case % 4];
        let t = wasserstein(&space, &r, &s, p).unwrap();
        let lp = lp_transport_cost(&cost_matrix(&space.distance_matrix(), p), r.mass(), s.mass());
        assert!(close(t.cost, lp, 1e-8), "case {case}: {} vs {lp}", t.cost);

        let rows = t.plan.row_sums(n);
        let cols = t.plan.col_sums(n);
        for x in 0..n {
            assert!((rows[x] - r.mass()[x]).abs() < 1e-9);
            assert!((cols[x] - s.mass()[x]).abs() < 1e-9);
        }
        assert!(t.dual.max_violation(&space, p) <= 1e-9);
        assert!((t.dual.objective(r.mass(), s.mass()) - t.cost).abs() <= 1e-8);
        assert_eq!(t.dual.lambda[space.base_point()], 0.0);
        for &(x, y, w) in &t.plan.entries {
            if w > 1e-9 {
                assert!((t.dual.lambda[x] + t.dual.mu[y] - space.cost(x, y, p)).abs() <= 1e-7);
            }
        }
    }
}

#[test]
fn four_point_space_p2() {
    let mut rng = rng(4);
    let space = random_points(&mut rng, 4, 2);
    let r = random_probability(&mut rng, 4);
    let s = random_probability(&mut rng, 4);
    let lp = lp_transport_cost(&cost_matrix(&space.distance_matrix(), 2.0), r.mass(), s.mass());
    assert!(close(wasserstein(&space, &r, &s, 2.0).unwrap().cost, lp, 1e-8));
}

#[test]
fn thresholded_matches_dense_lp_on_thirty_points() {
    let mut rng = rng(30);
    for p in [1.0, 2.0] {
        let space = random_points(&mut rng, 30, 2);
        let r = random_probability(&mut rng, 30);
        let s = random_probability(&mut rng, 30);
        let t = median_distance(&space);
        let tm = ThresholdedMetric::new(space.clone(), t).unwrap();
        let fast = thresholded_wasserstein(&tm, &r, &s, p).unwrap();
        let dense = wasserstein(&tm, &r, &s, p).unwrap();
        assert!(close(fast.cost, dense.cost, 1e-8));
        let lp = lp_transport_cost(&cost_matrix(&thresholded_matrix(&space, t), p), r.mass(), s.mass());
        assert!(close(fast.cost, lp, 1e-8), "{} vs {lp}", fast.cost);
        assert!(fast.dual.max_violation(&tm, p) <= 1e-9);
        assert!((fast.plan.cost(&tm, p) - fast.cost).abs() <= 1e-9);
    }
}

#[test]
fn thresholded_disjoint_supports_pay_t() {
    let space = MetricSpace::from_coordinates(vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
    let r = Measure::probability(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    let s = Measure::probability(vec![0.0, 0.0, 0.25, 0.75]).unwrap();
    let tm = ThresholdedMetric::new(space, 2.0).unwrap();
    let t = thresholded_wasserstein(&tm, &r, &s, 1.0).unwrap();
    assert!((t.distance - 2.0).abs() < 1e-12);
}

#[test]
fn limit_flow_matches_dual_lp() {
    let mut rng = rng(12);
    for case in 0..40 {
        let n = rng.random_range(2..=10);
        let space = random_points(&mut rng, n, 2);
        let mut values = random_centered(&mut rng, n);
        if case % 3 == 0 {
            values[0] = 0.0;
            let total: f64 = values.iter().sum();
            values[n - 1] -= total;
        }
        let g = GaussianDraw::new(values);
        let p = [0.5, 1.0, 2.0, 3.0][case % 4];
        let flow = limit_flow(&space, &g, p).unwrap();
        let lp = lp_limit_flow(&cost_matrix(&space.distance_matrix(), p), &g.values);
        assert!(close(flow.value, lp, 1e-8), "case {case} p {p}: {} vs {lp}", flow.value);
        let attained: f64 = g.values.iter().zip(&flow.lambda).map(|(a, b)| a * b).sum();
        assert!(close(attained, flow.value, 1e-8));
        for x in 0..n {
            for y in 0..n {
                assert!(flow.lambda[x] - flow.lambda[y] <= space.cost(x, y, p) + 1e-9);
            }
        }
    }
}

#[test]
fn thresholded_limit_flow_matches_dual_lp() {
    let mut rng = rng(13);
    for case in 0..30 {
        let n = rng.random_range(3..=10);
        let space = random_points(&mut rng, n, 2);
        let t = median_distance(&space);
        let tm = ThresholdedMetric::new(space.clone(), t).unwrap();
        let mut values = random_centered(&mut rng, n);
        if case % 2 == 0 {
            values[1] = 0.0;
            let total: f64 = values.iter().sum();
            values[0] -= total;
        }
        let g = GaussianDraw::new(values);
        let p = [1.0, 2.0, 0.5][case % 3];
        let flow = thresholded_limit_flow(&tm, &g, p).unwrap();
        let lp = lp_limit_flow(&cost_matrix(&thresholded_matrix(&space, t), p), &g.values);
        assert!(close(flow.value, lp, 1e-8), "case {case}: {} vs {lp}", flow.value);
        let dense = limit_flow(&tm, &g, p).unwrap();
        assert!(close(flow.value, dense.value, 1e-8));
        for x in 0..n {
            for y in 0..n {
                assert!(flow.lambda[x] - flow.lambda[y] <= tm.cost(x, y, p) + 1e-9);
            }
        }
    }
}

#[test]
fn two_point_limit_flow() {
    let space = MetricSpace::from_coordinates(vec![vec![0.0], vec![1.5]]).unwrap();
    let g = GaussianDraw::new(vec![0.4, -0.4]);
    for p in [1.0, 2.0, 3.0] {
        assert!((limit_flow(&space, &g, p).unwrap().value - 0.4 * 1.5f64.powf(p)).abs() < 1e-12);
    }
    assert_eq!(limit_flow(&space, &GaussianDraw::zeros(2), 2.0).unwrap().value, 0.0);
}

/// The transport cost between the two parts of the Jordan decomposition
/// equals the limit-flow value for p = 1 and bounds it from above for
/// p > 1, where intermediate points can be used as relays.
#[test]
fn jordan_decomposition_oracle() {
    let mut rng = rng(14);
    for case in 0..40 {
        let n = rng.random_range(2..=9);
        let space = random_points(&mut rng, n, 2);
        let g = GaussianDraw::new(random_centered(&mut rng, n));
        let p = [1.0, 2.0][case % 2];
        let (plus, minus) = jordan_decompose(&g).unwrap();
        let mass = plus.total();
        let a = Measure::from_weights(plus.mass()).unwrap();
        let b = Measure::from_weights(minus.mass()).unwrap();
        let jordan = mass * wasserstein(&space, &a, &b, p).unwrap().cost;
        let flow = limit_flow(&space, &g, p).unwrap().value;
        if p == 1.0 {
            assert!(close(flow, jordan, 1e-8), "case {case}: {flow} vs {jordan}");
        } else {
            assert!(flow <= jordan + 1e-8, "case {case}: {flow} > {jordan}");
        }
    }
}

#[test]
fn relays_make_jordan_strict_for_p_above_one() {
    let space = MetricSpace::from_coordinates(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let g = GaussianDraw::new(vec![1.0, 0.0, -1.0]);
    let (plus, minus) = jordan_decompose(&g).unwrap();
    let jordan = wasserstein(&space, &Measure::from_weights(plus.mass()).unwrap(), &Measure::from_weights(minus.mass()).unwrap(), 2.0)
        .unwrap()
        .cost;
    assert!((jordan - 4.0).abs() < 1e-12);
    assert!((limit_flow(&space, &g, 2.0).unwrap().value - 2.0).abs() < 1e-12);
}

#[test]
fn dual_face_max_matches_face_lp() {
    let mut rng = rng(15);
    let mut checked = 0;
    for case in 0..40 {
        let n = rng.random_range(2..=5);
        // integer coordinates on a line give ties and hence non-unique duals
        let coords: Vec<Vec<f64>> = {
            let mut xs: Vec<f64> = Vec::new();
            while xs.len() < n {
                let v = rng.random_range(0..8) as f64;
                if !xs.contains(&v) {
                    xs.push(v);
                }
            }
            xs.into_iter().map(|v| vec![v]).collect()
        };
        let space = MetricSpace::from_coordinates(coords).unwrap();
        let r = random_sparse_probability(&mut rng, n, 0.8);
        let s = random_sparse_probability(&mut rng, n, 0.8);
        if r.mass() == s.mass() {
            continue;
        }
        let p = [1.0, 2.0][case % 2];
        let transport = wasserstein(&space, &r, &s, p).unwrap();
        // draws live on the supports, as Gaussian draws from r and s do
        let mut gv = vec![0.0; n];
        for x in r.support() {
            gv[x] = rng.random_range(-1.0..1.0);
        }
        let gs: f64 = gv.iter().sum();
        gv[r.support()[0]] -= gs;
        let mut hv = vec![0.0; n];
        for y in s.support() {
            hv[y] = rng.random_range(-1.0..1.0);
        }
        let hs: f64 = hv.iter().sum();
        hv[s.support()[0]] -= hs;
        let (g, h) = (GaussianDraw::new(gv), GaussianDraw::new(hv));
        let alpha = [0.5, 0.3, 1.0][case % 3];
        let face = dual_face_max(&space, &r, &s, p, &transport, &g, Some(&h), alpha).unwrap();
        let tight: Vec<(usize, usize)> =
            transport.plan.entries.iter().filter(|e| e.2 > 1e-12).map(|&(x, y, _)| (x, y)).collect();
        let c = cost_matrix(&space.distance_matrix(), p);
        let lp = lp_face_max(&c, &tight, &g.values, &h.values, alpha.sqrt(), (1.0 - alpha).sqrt());
        assert!(close(face.value, lp, 1e-7), "case {case}: {} vs {lp}", face.value);
        assert!(face.dual.max_violation(&space, p) <= 1e-9);
        for &(x, y) in &tight {
            assert!((face.dual.lambda[x] + face.dual.mu[y] - c[x][y]).abs() <= 1e-7);
        }
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn dual_face_with_zero_draws_is_zero() {
    let space = MetricSpace::from_coordinates(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
    let r = Measure::probability(vec![0.5, 0.5, 0.0]).unwrap();
    let s = Measure::probability(vec![0.0, 0.5, 0.5]).unwrap();
    let transport = wasserstein(&space, &r, &s, 2.0).unwrap();
    let zero = GaussianDraw::zeros(3);
    let face = dual_face_max(&space, &r, &s, 2.0, &transport, &zero, Some(&zero), 0.5).unwrap();
    assert!(face.value.abs() < 1e-12);
}

fn measure_strategy(n: usize) -> impl Strategy<Value = Measure> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |w| {
        let w: Vec<f64> = w.into_iter().map(|v| if v < 0.3 { 0.0 } else { v }).collect();
        Measure::from_weights(&w).ok()
    })
}

fn space_strategy(n: usize) -> impl Strategy<Value = MetricSpace> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), n)
        .prop_filter_map("distinct", |pts| MetricSpace::from_coordinates(pts).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric(
        space in space_strategy(6),
        a in measure_strategy(6),
        b in measure_strategy(6),
        c in measure_strategy(6),
        p in prop::sample::select(vec![1.0, 2.0, 3.0]),
    ) {
        let ab = wasserstein(&space, &a, &b, p).unwrap().distance;
        let ba = wasserstein(&space, &b, &a, p).unwrap().distance;
        let bc = wasserstein(&space, &b, &c, p).unwrap().distance;
        let ac = wasserstein(&space, &a, &c, p).unwrap().distance;
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + 1e-8);
        prop_assert!(wasserstein(&space, &a, &a, p).unwrap().distance.abs() <= 1e-12);
    }

    #[test]
    fn threshold_monotonicity(
        space in space_strategy(8),
        a in measure_strategy(8),
        b in measure_strategy(8),
        t1 in 0.05f64..3.0,
        dt in 0.0f64..2.0,
        p in prop::sample::select(vec![1.0, 2.0]),
    ) {
        let low = thresholded_wasserstein(&ThresholdedMetric::new(space.clone(), t1).unwrap(), &a, &b, p).unwrap().cost;
        let high = thresholded_wasserstein(&ThresholdedMetric::new(space.clone(), t1 + dt).unwrap(), &a, &b, p).unwrap().cost;
        let full = wasserstein(&space, &a, &b, p).unwrap().cost;
        prop_assert!(low <= high + 1e-9);
        prop_assert!(high <= full + 1e-9);
        let wide = thresholded_wasserstein(&ThresholdedMetric::new(space.clone(), space.diameter() * 1.01).unwrap(), &a, &b, p).unwrap().cost;
        prop_assert!((wide - full).abs() <= 1e-9 * (1.0 + full));
    }

    #[test]
    fn limit_flow_is_nonnegative_and_even(
        space in space_strategy(7),
        raw in prop::collection::vec(-1.0f64..1.0, 7),
        p in prop::sample::select(vec![1.0, 2.0]),
    ) {
        let mean = raw.iter().sum::<f64>() / 7.0;
        let mut v: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let total: f64 = v.iter().sum();
        v[6] -= total;
        let pos = limit_flow(&space, &GaussianDraw::new(v.clone()), p).unwrap().value;
        let neg = limit_flow(&space, &GaussianDraw::new(v.iter().map(|x| -x).collect()), p).unwrap().value;
        prop_assert!(pos >= 0.0);
        // the cost is symmetric, so reversing every flow is optimal for -g
        prop_assert!((pos - neg).abs() <= 1e-9 * (1.0 + pos));
    }
}
