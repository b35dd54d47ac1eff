//! Per-stage price distributions.
//!
//! The backward recursion only ever asks a distribution three things: its
//! CDF at a point, the mass of an interval and the partial expectation
//! `∫_a^b u f(u) du` over an interval. Monte Carlo evaluation additionally
//! draws samples. Every interval operation accepts `±∞` bounds.
//!
//! Intervals are half-open `(a, b]` throughout, matching the right-continuous
//! CDF, so that masses and partial expectations telescope exactly for atomic
//! distributions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Tolerance on the sum of empirical weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Serialized form of a distribution. Constructed values are always
/// validated; see [`PriceDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionKind {
    Normal { mean: f64, std_dev: f64 },
    PointMass { location: f64 },
    /// Sorted `(value, weight)` pairs.
    Empirical { support: Vec<(f64, f64)> },
    Shifted {
        offset: f64,
        inner: Box<PriceDistribution>,
    },
}

/// A stage price distribution. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionKind", into = "DistributionKind")]
pub struct PriceDistribution {
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Normal { mean: f64, std_dev: f64 },
    PointMass { location: f64 },
    Empirical(Empirical),
    Shifted {
        offset: f64,
        inner: Box<PriceDistribution>,
    },
}

/// Empirical support with prefix sums of weight and of weight × value.
#[derive(Debug, Clone, PartialEq)]
struct Empirical {
    values: Vec<f64>,
    weights: Vec<f64>,
    cum_weight: Vec<f64>,
    cum_moment: Vec<f64>,
}

impl Empirical {
    fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution("empty empirical support".into()));
        }
        for &(x, w) in &points {
            if !x.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite support value {x}"
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidDistribution(format!("invalid weight {w}")));
            }
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut values: Vec<f64> = Vec::with_capacity(points.len());
        let mut weights: Vec<f64> = Vec::with_capacity(points.len());
        for (x, w) in points {
            if w == 0.0 {
                continue;
            }
            match values.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    values.push(x);
                    weights.push(w);
                }
            }
        }
        if values.is_empty() {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }

        let mut cum_weight = Vec::with_capacity(values.len());
        let mut cum_moment = Vec::with_capacity(values.len());
        let (mut sw, mut sm) = (0.0, 0.0);
        for (&x, &w) in values.iter().zip(&weights) {
            sw += w;
            sm += w * x;
            cum_weight.push(sw);
            cum_moment.push(sm);
        }
        // Pin the last cumulative weight so cdf(+inf) is exactly one.
        *cum_weight.last_mut().unwrap() = 1.0;

        Ok(Self {
            values,
            weights,
            cum_weight,
            cum_moment,
        })
    }

    /// Number of support points `<= x`.
    fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 0.0,
            k => self.cum_weight[k - 1],
        }
    }

    fn moment_le(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 0.0,
            k => self.cum_moment[k - 1],
        }
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        let (i, j) = (self.count_le(a), self.count_le(b));
        if i == j {
            return 0.0;
        }
        let lo = if i == 0 { 0.0 } else { self.cum_weight[i - 1] };
        self.cum_weight[j - 1] - lo
    }

    fn quantile(&self, p: f64) -> f64 {
        let k = self.cum_weight.partition_point(|&c| c < p);
        self.values[k.min(self.values.len() - 1)]
    }

    fn pairs(&self) -> Vec<(f64, f64)> {
        self.values.iter().copied().zip(self.weights.iter().copied()).collect()
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `Φ(β) − Φ(α)` without cancellation in the upper tail.
fn std_normal_mass(alpha: f64, beta: f64) -> f64 {
    if alpha >= 0.0 {
        0.5 * (erfc(alpha * FRAC_1_SQRT_2) - erfc(beta * FRAC_1_SQRT_2))
    } else {
        std_normal_cdf(beta) - std_normal_cdf(alpha)
    }
}

impl PriceDistribution {
    pub fn normal(mean: f64, std_dev: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidDistribution(format!("non-finite mean {mean}")));
        }
        if !(std_dev > 0.0) || !std_dev.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "normal standard deviation must be positive and finite, got {std_dev}"
            )));
        }
        Ok(Self {
            repr: Repr::Normal { mean, std_dev },
        })
    }

    pub fn point_mass(location: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "non-finite point mass {location}"
            )));
        }
        Ok(Self {
            repr: Repr::PointMass { location },
        })
    }

    /// Weighted support points; order does not matter and duplicate values
    /// are merged.
    pub fn empirical(points: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            repr: Repr::Empirical(Empirical::new(points)?),
        })
    }

    /// Equal-weight empirical distribution over `samples`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDistribution("no samples".into()));
        }
        let w = 1.0 / samples.len() as f64;
        let points = samples.iter().map(|&x| (x, w)).collect();
        Self::empirical(points)
    }

    /// `inner` translated by `offset`.
    pub fn shifted(inner: PriceDistribution, offset: f64) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::InvalidDistribution(format!("non-finite offset {offset}")));
        }
        Ok(Self {
            repr: Repr::Shifted {
                offset,
                inner: Box::new(inner),
            },
        })
    }

    pub fn kind(&self) -> DistributionKind {
        self.clone().into()
    }

    /// True when the distribution has a density (no atoms).
    pub fn is_continuous(&self) -> bool {
        match &self.repr {
            Repr::Normal { .. } => true,
            Repr::PointMass { .. } | Repr::Empirical(_) => false,
            Repr::Shifted { inner, .. } => inner.is_continuous(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match &self.repr {
            Repr::Normal { mean, std_dev } => std_normal_cdf((x - mean) / std_dev),
            Repr::PointMass { location } => {
                if x >= *location {
                    1.0
                } else {
                    0.0
                }
            }
            Repr::Empirical(emp) => emp.cdf(x),
            Repr::Shifted { offset, inner } => inner.cdf(x - offset),
        }
    }

    /// Density at `x`, or `None` for distributions with atoms.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match &self.repr {
            Repr::Normal { mean, std_dev } => {
                Some(std_normal_pdf((x - mean) / std_dev) / std_dev)
            }
            Repr::PointMass { .. } | Repr::Empirical(_) => None,
            Repr::Shifted { offset, inner } => inner.pdf(x - offset),
        }
    }

    /// Probability of the interval `(a, b]`; zero when `a >= b`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        match &self.repr {
            Repr::Normal { mean, std_dev } => {
                std_normal_mass((a - mean) / std_dev, (b - mean) / std_dev)
            }
            Repr::PointMass { location } => {
                if a < *location && *location <= b {
                    1.0
                } else {
                    0.0
                }
            }
            Repr::Empirical(emp) => emp.mass(a, b),
            Repr::Shifted { offset, inner } => inner.mass(a - offset, b - offset),
        }
    }

    /// `∫_{(a, b]} u dF(u)`.
    pub fn partial_expectation(&self, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() {
            return Err(Error::InvalidInterval { lower: a, upper: b });
        }
        if a > b {
            return Err(Error::InvalidInterval { lower: a, upper: b });
        }
        Ok(self.partial_expectation_unchecked(a, b))
    }

    /// Partial expectation without the bound check; returns zero for empty
    /// or reversed intervals.
    pub(crate) fn partial_expectation_unchecked(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        match &self.repr {
            Repr::Normal { mean, std_dev } => {
                let alpha = (a - mean) / std_dev;
                let beta = (b - mean) / std_dev;
                mean * std_normal_mass(alpha, beta)
                    - std_dev * (std_normal_pdf(beta) - std_normal_pdf(alpha))
            }
            Repr::PointMass { location } => {
                if a < *location && *location <= b {
                    *location
                } else {
                    0.0
                }
            }
            Repr::Empirical(emp) => emp.moment_le(b) - emp.moment_le(a),
            Repr::Shifted { offset, inner } => {
                let (a0, b0) = (a - offset, b - offset);
                inner.partial_expectation_unchecked(a0, b0) + offset * inner.mass(a0, b0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.repr {
            Repr::Normal { mean, .. } => *mean,
            Repr::PointMass { location } => *location,
            Repr::Empirical(emp) => *emp.cum_moment.last().unwrap(),
            Repr::Shifted { offset, inner } => inner.mean() + offset,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match &self.repr {
            Repr::Normal { std_dev, .. } => *std_dev,
            Repr::PointMass { .. } => 0.0,
            Repr::Empirical(emp) => {
                let m = self.mean();
                emp.values
                    .iter()
                    .zip(&emp.weights)
                    .map(|(x, w)| w * (x - m) * (x - m))
                    .sum::<f64>()
                    .sqrt()
            }
            Repr::Shifted { inner, .. } => inner.std_dev(),
        }
    }

    /// Smallest `x` with `cdf(x) >= p`, for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.repr {
            Repr::Normal { mean, std_dev } => {
                let z = Normal::standard().inverse_cdf(p);
                mean + std_dev * z
            }
            Repr::PointMass { location } => *location,
            Repr::Empirical(emp) => emp.quantile(p),
            Repr::Shifted { offset, inner } => inner.quantile(p) + offset,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.repr {
            Repr::Normal { mean, std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std_dev * z
            }
            Repr::PointMass { location } => *location,
            Repr::Empirical(emp) => {
                if emp.values.len() == 1 {
                    return emp.values[0];
                }
                let u: f64 = rng.random();
                let k = emp.cum_weight.partition_point(|&c| c <= u);
                emp.values[k.min(emp.values.len() - 1)]
            }
            Repr::Shifted { offset, inner } => inner.sample(rng) + offset,
        }
    }

    /// `n`-point equal-weight approximation at the midpoint quantiles
    /// `(k − ½)/n`.
    pub fn discretize(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution(
                "discretization needs at least one point".into(),
            ));
        }
        let w = 1.0 / n as f64;
        let points = (1..=n)
            .map(|k| (self.quantile((k as f64 - 0.5) / n as f64), w))
            .collect();
        Self::empirical(points)
    }

    /// Support points of a finite distribution (point mass, empirical or a
    /// shift of either), `None` for continuous kinds.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match &self.repr {
            Repr::Normal { .. } => None,
            Repr::PointMass { location } => Some(vec![(*location, 1.0)]),
            Repr::Empirical(emp) => Some(emp.pairs()),
            Repr::Shifted { offset, inner } => inner
                .support()
                .map(|s| s.into_iter().map(|(x, w)| (x + offset, w)).collect()),
        }
    }
}

impl TryFrom<DistributionKind> for PriceDistribution {
    type Error = Error;

    fn try_from(kind: DistributionKind) -> Result<Self> {
        match kind {
            DistributionKind::Normal { mean, std_dev } => Self::normal(mean, std_dev),
            DistributionKind::PointMass { location } => Self::point_mass(location),
            DistributionKind::Empirical { support } => Self::empirical(support),
            DistributionKind::Shifted { offset, inner } => Self::shifted(*inner, offset),
        }
    }
}

impl From<PriceDistribution> for DistributionKind {
    fn from(d: PriceDistribution) -> Self {
        match d.repr {
            Repr::Normal { mean, std_dev } => DistributionKind::Normal { mean, std_dev },
            Repr::PointMass { location } => DistributionKind::PointMass { location },
            Repr::Empirical(emp) => DistributionKind::Empirical {
                support: emp.pairs(),
            },
            Repr::Shifted { offset, inner } => DistributionKind::Shifted { offset, inner },
        }
    }
}
