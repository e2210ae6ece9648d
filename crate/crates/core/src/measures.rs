//! Probability and signed measures, empirical measures, the multinomial
//! covariance and exact Gaussian sampling from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};

/// Tolerance on the total mass of a probability measure.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Tolerance on the total of a Gaussian draw (relative to `1 + |g|_1`).
pub const BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Probability,
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    mass: Vec<f64>,
    kind: MeasureKind,
}

impl Measure {
    /// Nonnegative entries summing to one within [`PROBABILITY_TOL`].
    pub fn probability(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(OtError::InvalidMeasure("empty mass vector".into()));
        }
        if let Some((i, &m)) = mass.iter().enumerate().find(|(_, m)| !m.is_finite() || **m < 0.0) {
            return Err(OtError::InvalidMeasure(format!("entry {i} is {m}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(OtError::InvalidMeasure(format!("total mass {total} is not 1")));
        }
        Ok(Self { mass, kind: MeasureKind::Probability })
    }

    /// Normalises nonnegative weights to a probability measure.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(OtError::InvalidMeasure(format!("weight {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(OtError::InvalidMeasure("weights sum to zero".into()));
        }
        Self::probability(weights.iter().map(|w| w / total).collect())
    }

    pub fn signed(mass: Vec<f64>) -> Result<Self> {
        if let Some((i, &m)) = mass.iter().enumerate().find(|(_, m)| !m.is_finite()) {
            return Err(OtError::InvalidMeasure(format!("entry {i} is {m}")));
        }
        Ok(Self { mass, kind: MeasureKind::Signed })
    }

    pub fn point_mass(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(OtError::IndexOutOfRange { index: at, len });
        }
        let mut mass = vec![0.0; len];
        mass[at] = 1.0;
        Self::probability(mass)
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; len])
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.mass.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(i, _)| i).collect()
    }

    pub fn require_probability(&self) -> Result<()> {
        match self.kind {
            MeasureKind::Probability => Ok(()),
            MeasureKind::Signed => Err(OtError::InvalidMeasure("a probability measure is required".into())),
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if self.mass.len() == len {
            Ok(())
        } else {
            Err(OtError::DimensionMismatch { expected: len, got: self.mass.len() })
        }
    }

    /// Restriction to `indices`, in that order, without renormalising.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let mass = indices.iter().map(|&i| self.mass[i]).collect();
        match self.kind {
            MeasureKind::Probability => Self::probability(mass),
            MeasureKind::Signed => Self::signed(mass),
        }
    }

    /// `(n r + m s) / (n + m)`.
    pub fn pooled(r: &Measure, n: u64, s: &Measure, m: u64) -> Result<Self> {
        r.check_len(s.len())?;
        let (wn, wm) = (n as f64, m as f64);
        let total = wn + wm;
        Self::from_weights(&r.mass.iter().zip(&s.mass).map(|(a, b)| (wn * a + wm * b) / total).collect::<Vec<_>>())
    }
}

/// Empirical measure of a sample of point indices.
pub fn empirical_measure(len: usize, sample: &[usize]) -> Result<Measure> {
    if sample.is_empty() {
        return Err(OtError::EmptySample);
    }
    let mut counts = vec![0u64; len];
    for &x in sample {
        if x >= len {
            return Err(OtError::IndexOutOfRange { index: x, len });
        }
        counts[x] += 1;
    }
    empirical_from_counts(&counts)
}

/// Empirical measure from occurrence counts (`counts / n`).
pub fn empirical_from_counts(counts: &[u64]) -> Result<Measure> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(OtError::EmptySample);
    }
    let nf = n as f64;
    Measure::probability(counts.iter().map(|&c| c as f64 / nf).collect())
}

/// `Sigma(r)`: `r_x (1 - r_x)` on the diagonal, `-r_x r_y` off it.
pub fn covariance_matrix(r: &Measure) -> Vec<Vec<f64>> {
    let m = r.mass();
    (0..m.len())
        .map(|i| (0..m.len()).map(|j| if i == j { m[i] * (1.0 - m[i]) } else { -m[i] * m[j] }).collect())
        .collect()
}

/// Generator for replicate `stream` of a run seeded with `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Multinomial counts of `n` draws from `r` (sequential conditional binomials).
pub fn sample_counts<R: Rng + ?Sized>(r: &Measure, n: u64, rng: &mut R) -> Vec<u64> {
    let mass = r.mass();
    let mut counts = vec![0u64; mass.len()];
    let mut remaining = n;
    let mut rest = 1.0f64;
    for (i, &m) in mass.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if m <= 0.0 {
            continue;
        }
        let prob = if rest <= m { 1.0 } else { (m / rest).clamp(0.0, 1.0) };
        let k = if prob >= 1.0 { remaining } else { Binomial::new(remaining, prob).expect("valid binomial").sample(rng) };
        counts[i] = k;
        remaining -= k;
        rest -= m;
    }
    if remaining > 0 {
        // rounding left a sliver of mass; give it to the last support point
        if let Some(last) = mass.iter().rposition(|&m| m > 0.0) {
            counts[last] += remaining;
        }
    }
    counts
}

/// Expands counts into a list of point indices (ascending).
pub fn counts_to_sample(counts: &[u64]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect()
}

/// One realisation of `G ~ N(0, Sigma(r))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDraw {
    pub values: Vec<f64>,
    /// `(master seed, stream)` when the draw came from [`stream_rng`].
    pub seed_path: Option<(u64, u64)>,
}

impl GaussianDraw {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, seed_path: None }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Exact draw from `N(0, Sigma(r))` in O(N): with i.i.d. standard normals `Z`,
/// `G = sqrt(r) * Z - r <sqrt(r), Z>`. Normals are consumed only on the
/// support of `r`, in index order.
pub fn sample_gaussian<R: Rng + ?Sized>(r: &Measure, rng: &mut R) -> GaussianDraw {
    let mass = r.mass();
    let mut values = vec![0.0; mass.len()];
    let mut inner = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            let a = m.sqrt();
            let z: f64 = StandardNormal.sample(rng);
            values[i] = a * z;
            inner += a * z;
        }
    }
    for (v, &m) in values.iter_mut().zip(mass) {
        if m > 0.0 {
            *v -= m * inner;
        }
    }
    GaussianDraw::new(values)
}

/// Draw number `stream` of a run seeded with `master`.
pub fn sample_gaussian_stream(r: &Measure, master: u64, stream: u64) -> GaussianDraw {
    let mut rng = stream_rng(master, stream);
    let mut g = sample_gaussian(r, &mut rng);
    g.seed_path = Some((master, stream));
    g
}

/// `g = g+ - g-` with `g+ = max(g, 0)` and `g- = max(-g, 0)`.
pub fn jordan_decompose(g: &GaussianDraw) -> Result<(Measure, Measure)> {
    check_balanced(&g.values)?;
    let plus = g.values.iter().map(|&v| v.max(0.0)).collect();
    let minus = g.values.iter().map(|&v| (-v).max(0.0)).collect();
    Ok((Measure::signed(plus)?, Measure::signed(minus)?))
}

pub(crate) fn check_balanced(values: &[f64]) -> Result<()> {
    let total: f64 = values.iter().sum();
    let scale: f64 = 1.0 + values.iter().map(|v| v.abs()).sum::<f64>();
    if total.abs() > BALANCE_TOL * scale || !total.is_finite() {
        Err(OtError::Unbalanced { total })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_examples() {
        let r = empirical_measure(2, &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.mass(), &[0.5, 0.5]);
        let r = empirical_measure(3, &[2]).unwrap();
        assert_eq!(r.mass(), &[0.0, 0.0, 1.0]);
        assert!(matches!(empirical_measure(2, &[0, 5]), Err(OtError::IndexOutOfRange { .. })));
        assert!(matches!(empirical_measure(2, &[]), Err(OtError::EmptySample)));
    }

    #[test]
    fn covariance_examples() {
        let s = covariance_matrix(&Measure::probability(vec![0.5, 0.5]).unwrap());
        assert_eq!(s, vec![vec![0.25, -0.25], vec![-0.25, 0.25]]);
        let s = covariance_matrix(&Measure::probability(vec![1.0, 0.0]).unwrap());
        assert!(s.iter().flatten().all(|&v| v == 0.0));
        let s = covariance_matrix(&Measure::probability(vec![0.2, 0.3, 0.5]).unwrap());
        for row in &s {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn point_mass_gives_zero_draw() {
        let r = Measure::point_mass(4, 2).unwrap();
        let g = sample_gaussian_stream(&r, 7, 0);
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn draws_are_reproducible_per_stream() {
        let r = Measure::probability(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = sample_gaussian_stream(&r, 11, 3);
        let b = sample_gaussian_stream(&r, 11, 3);
        let c = sample_gaussian_stream(&r, 11, 4);
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.seed_path, Some((11, 3)));
    }

    #[test]
    fn jordan_examples() {
        let (p, m) = jordan_decompose(&GaussianDraw::new(vec![0.3, -0.3])).unwrap();
        assert_eq!(p.mass(), &[0.3, 0.0]);
        assert_eq!(m.mass(), &[0.0, 0.3]);
        let (p, m) = jordan_decompose(&GaussianDraw::zeros(3)).unwrap();
        assert_eq!(p.total() + m.total(), 0.0);
        assert!(matches!(jordan_decompose(&GaussianDraw::new(vec![0.3, 0.1])), Err(OtError::Unbalanced { .. })));
    }

    #[test]
    fn multinomial_counts_sum_to_n() {
        let r = Measure::probability(vec![0.2, 0.0, 0.3, 0.5]).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..20 {
            let c = sample_counts(&r, 1000, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), 1000);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn probability_validation() {
        assert!(Measure::probability(vec![0.5, 0.6]).is_err());
        assert!(Measure::probability(vec![-0.1, 1.1]).is_err());
        assert!(Measure::from_weights(&[0.0, 0.0]).is_err());
        assert_eq!(Measure::from_weights(&[1.0, 3.0]).unwrap().mass(), &[0.25, 0.75]);
    }
}
