//! Brute-force stochastic dynamic programming on small discrete instances.
//!
//! Everything here works on value-function *levels* `V_t(e)` tabulated on a
//! grid and maximizes the single-period problem by enumerating candidate
//! end states. It deliberately shares nothing with the analytical
//! recursion or the dispatch policy beyond [`StorageSpec`], so it can serve
//! as an independent reference for both.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distributions::PriceDistribution;
use crate::error::{Error, Result};
use crate::storage::StorageSpec;

/// Upper bound on `K·J²·T` accepted by [`sdp_solve`].
pub const GUARD: u64 = 100_000_000;

/// A value-function level tabulated on a uniform grid over `[0, E]`, with
/// linear interpolation in between.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    capacity: f64,
    levels: Vec<f64>,
}

impl GridFunction {
    pub fn new(capacity: f64, levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 || !(capacity > 0.0) {
            return Err(Error::InvalidCurve("grid function needs two or more levels".into()));
        }
        Ok(Self { capacity, levels })
    }

    /// Levels from marginal values on the grid, integrated with the
    /// trapezoid rule (`V(0) = 0`).
    pub fn from_marginals(capacity: f64, marginals: &[f64]) -> Result<Self> {
        let h = capacity / (marginals.len().max(2) - 1) as f64;
        let mut levels = Vec::with_capacity(marginals.len());
        let mut acc = 0.0;
        levels.push(0.0);
        for w in marginals.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            levels.push(acc);
        }
        Self::new(capacity, levels)
    }

    /// Exact integral of the step function that takes the value of the
    /// nearest grid sample, tabulated at half-grid resolution so that every
    /// kink (the midpoints between samples) is a table point.
    pub fn from_step_marginals(capacity: f64, marginals: &[f64]) -> Result<Self> {
        let j = marginals.len();
        if j < 2 {
            return Err(Error::InvalidCurve("need two or more marginals".into()));
        }
        let half = 0.5 * capacity / (j - 1) as f64;
        let mut levels = Vec::with_capacity(2 * j - 1);
        let mut acc = 0.0;
        levels.push(0.0);
        for k in 0..2 * (j - 1) {
            // half-cell k: even → right half of sample k/2, odd → left half
            // of sample (k+1)/2
            let v = marginals[k.div_ceil(2)];
            acc += half * v;
            levels.push(acc);
        }
        Self::new(capacity, levels)
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn step(&self) -> f64 {
        self.capacity / (self.levels.len() - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.capacity * j as f64 / (self.levels.len() - 1) as f64
    }

    pub fn at(&self, e: f64) -> f64 {
        let last = self.levels.len() - 1;
        let x = (e / self.step()).clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last - 1);
        let frac = x - k as f64;
        self.levels[k] + frac * (self.levels[k + 1] - self.levels[k])
    }
}

/// Which end states the single-period search enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidates {
    /// Table points reachable within the power limits (plus staying put).
    Grid,
    /// Table points plus the exact full-power end states, which makes the
    /// search exact for the piecewise-linear interpolant.
    GridAndBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageDecision {
    pub discharge: f64,
    pub charge: f64,
    pub soc: f64,
}

/// `max λ(p_d − p_c) − c·p_d + V(e_end)` by enumeration.
pub fn single_stage_max(
    e_prev: f64,
    price: f64,
    next: &GridFunction,
    spec: &StorageSpec,
    candidates: Candidates,
) -> (StageDecision, f64) {
    let eta = spec.efficiency();
    let p = spec.power();
    let cost = spec.discharge_cost();
    let cap = next.capacity();
    let lo = (e_prev - p / eta).max(0.0);
    let hi = (e_prev + p * eta).min(cap);
    let h = next.step();
    let tol = 1e-9 * h;

    let evaluate = |soc: f64| -> Option<(StageDecision, f64)> {
        if soc < e_prev {
            if price <= 0.0 {
                return None;
            }
            let discharge = ((e_prev - soc) * eta).min(p);
            let value = (price - cost) * discharge + next.at(soc);
            Some((StageDecision { discharge, charge: 0.0, soc }, value))
        } else {
            let charge = ((soc - e_prev) / eta).min(p);
            let value = -price * charge + next.at(soc);
            Some((StageDecision { discharge: 0.0, charge, soc }, value))
        }
    };

    let mut best = evaluate(e_prev).unwrap();
    let mut consider = |soc: f64| {
        if let Some(cand) = evaluate(soc) {
            let scale = 1e-12 * (1.0 + cand.1.abs());
            let better = cand.1 > best.1 + scale
                || ((cand.1 - best.1).abs() <= scale
                    && (soc - e_prev).abs() < (best.0.soc - e_prev).abs());
            if better {
                best = cand;
            }
        }
    };

    let first = ((lo - tol) / h).ceil().max(0.0) as usize;
    let last = (((hi + tol) / h).floor() as usize).min(next.levels.len() - 1);
    for j in first..=last {
        consider(next.point(j));
    }
    if candidates == Candidates::GridAndBounds {
        consider(lo);
        consider(hi);
    }
    best
}

/// Fully discretized instance: empirical stage prices and terminal levels on
/// a uniform SoC grid.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    pub spec: StorageSpec,
    pub grid_points: usize,
    /// `(price, probability)` pairs for stage `1..=T`.
    pub stages: Vec<Vec<(f64, f64)>>,
    /// `V_T` on the grid ($).
    pub terminal: Vec<f64>,
}

impl DiscreteInstance {
    pub fn new(
        spec: StorageSpec,
        grid_points: usize,
        stages: Vec<Vec<(f64, f64)>>,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        if grid_points < 2 || terminal.len() != grid_points {
            return Err(Error::InvalidHorizon(format!(
                "terminal table has {} entries for {grid_points} grid points",
                terminal.len()
            )));
        }
        if stages.is_empty() || stages.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidHorizon("every stage needs support points".into()));
        }
        Ok(Self {
            spec,
            grid_points,
            stages,
            terminal,
        })
    }

    /// Builds an instance from stage distributions with finite support and
    /// terminal marginal values on the grid.
    pub fn from_distributions(
        spec: StorageSpec,
        stages: &[PriceDistribution],
        terminal_marginals: &[f64],
    ) -> Result<Self> {
        let supports = stages
            .iter()
            .enumerate()
            .map(|(t, d)| {
                d.support().ok_or_else(|| {
                    Error::InvalidHorizon(format!("stage {} has no finite support", t + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let terminal = GridFunction::from_marginals(spec.capacity(), terminal_marginals)?;
        Self::new(spec, terminal_marginals.len(), supports, terminal.levels)
    }

    /// `K·J²·T` with `K` the largest support.
    pub fn size(&self) -> u64 {
        let k = self.stages.iter().map(|s| s.len()).max().unwrap_or(0) as u64;
        let j = self.grid_points as u64;
        k * j * j * self.stages.len() as u64
    }

    pub fn check_guard(&self) -> Result<()> {
        let size = self.size();
        if size > GUARD {
            return Err(Error::GuardExceeded { size, limit: GUARD });
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.spec.capacity() / (self.grid_points - 1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    /// `values[t][j] = V_t(e_j)`, `t = 0..=T`.
    pub values: Vec<Vec<f64>>,
    /// Finite-difference marginals of `values` ($/MWh).
    pub marginals: Vec<Vec<f64>>,
}

/// Exact backward induction over the discrete instance, with end states
/// restricted to grid points.
pub fn sdp_solve(inst: &DiscreteInstance) -> Result<SdpSolution> {
    inst.check_guard()?;
    let cap = inst.spec.capacity();
    let t_max = inst.stages.len();
    let mut values = vec![Vec::new(); t_max + 1];
    values[t_max] = inst.terminal.clone();
    for t in (1..=t_max).rev() {
        let next = GridFunction::new(cap, values[t].clone())?;
        values[t - 1] = (0..inst.grid_points)
            .map(|j| {
                let e = next.point(j);
                inst.stages[t - 1]
                    .iter()
                    .map(|&(price, w)| {
                        w * single_stage_max(e, price, &next, &inst.spec, Candidates::Grid).1
                    })
                    .sum()
            })
            .collect();
    }
    let h = inst.step();
    let marginals = values.iter().map(|v| finite_differences(v, h)).collect();
    Ok(SdpSolution { values, marginals })
}

/// Central differences inside, one-sided at the two ends.
pub fn finite_differences(levels: &[f64], h: f64) -> Vec<f64> {
    let n = levels.len();
    (0..n)
        .map(|j| {
            if j == 0 {
                (levels[1] - levels[0]) / h
            } else if j == n - 1 {
                (levels[n - 1] - levels[n - 2]) / h
            } else {
                (levels[j + 1] - levels[j - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Best total over every sequence of grid actions on a deterministic price
/// path, by plain enumeration. Exponential; meant for tiny cases only.
pub fn enumerate_deterministic(
    spec: &StorageSpec,
    terminal: &GridFunction,
    prices: &[f64],
    e0: f64,
) -> f64 {
    fn go(spec: &StorageSpec, terminal: &GridFunction, prices: &[f64], e: f64) -> f64 {
        let Some((&price, rest)) = prices.split_first() else {
            return terminal.at(e);
        };
        let eta = spec.efficiency();
        let h = terminal.step();
        let tol = 1e-9 * h;
        let lo = (e - spec.power() / eta).max(0.0);
        let hi = (e + spec.power() * eta).min(terminal.capacity());
        let first = ((lo - tol) / h).ceil().max(0.0) as usize;
        let last = (((hi + tol) / h).floor() as usize).min(terminal.levels().len() - 1);
        let mut best = go(spec, terminal, rest, e);
        for j in first..=last {
            let soc = terminal.point(j);
            let gain = if soc < e {
                if price <= 0.0 {
                    continue;
                }
                (price - spec.discharge_cost()) * ((e - soc) * eta).min(spec.power())
            } else {
                -price * ((soc - e) / eta).min(spec.power())
            };
            best = best.max(gain + go(spec, terminal, rest, soc));
        }
        best
    }
    go(spec, terminal, prices, e0)
}

/// Sorted sample with its empirical CDF.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    /// Largest absolute CDF difference over `probes`.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, probes: &[f64], cdf: F) -> f64 {
        probes
            .iter()
            .map(|&x| (self.eval(x) - cdf(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Samples `n` prices and records the finite-difference marginal
/// `(Q(e+δ) − Q(e−δ)) / 2δ` of the single-period problem for each, with the
/// next-period level obtained by integrating the nearest-sample step
/// function through `next_marginals`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_q_cdf(
    e: f64,
    delta: f64,
    dist: &PriceDistribution,
    next_marginals: &[f64],
    spec: &StorageSpec,
    n: usize,
    seed: u64,
) -> Result<EmpiricalCdf> {
    let cap = spec.capacity();
    if !(delta > 0.0) || e - delta < 0.0 || e + delta > cap {
        return Err(Error::SocOutOfRange { soc: e, capacity: cap });
    }
    if n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let next = GridFunction::from_step_marginals(cap, next_marginals)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let price = dist.sample(&mut rng);
            let up = single_stage_max(e + delta, price, &next, spec, Candidates::GridAndBounds).1;
            let down = single_stage_max(e - delta, price, &next, spec, Candidates::GridAndBounds).1;
            (up - down) / (2.0 * delta)
        })
        .collect();
    Ok(EmpiricalCdf::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(p: f64) -> StorageSpec {
        StorageSpec::new(p, 2.0, 0.9, 10.0).unwrap()
    }

    fn linear_levels(j: usize) -> GridFunction {
        let m: Vec<f64> = (0..j).map(|k| 100.0 * (1.0 - k as f64 / (j - 1) as f64)).collect();
        GridFunction::from_marginals(2.0, &m).unwrap()
    }

    #[test]
    fn grid_function_integrates_marginals() {
        let g = linear_levels(21);
        // ∫₀² 100(1 − e/2) de = 100
        assert!((g.at(2.0) - 100.0).abs() < 1e-9);
        assert!((g.at(1.0) - 75.0).abs() < 1e-9);
        let s = GridFunction::from_step_marginals(2.0, &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(s.levels(), &[0.0, 5.0, 15.0, 25.0, 40.0]);
        assert!(GridFunction::new(1.0, vec![0.0]).is_err());
    }

    #[test]
    fn hold_band_is_idle() {
        let next = GridFunction::new(2.0, (0..21).map(|k| 50.0 * k as f64 / 10.0).collect()).unwrap();
        // marginal 50 everywhere; hold while 45 ≤ λ ≤ 65.6
        let (d, q) = single_stage_max(1.0, 55.0, &next, &spec(0.5), Candidates::Grid);
        assert_eq!(d.soc, 1.0);
        assert_eq!(d.charge + d.discharge, 0.0);
        assert_eq!(q, next.at(1.0));
    }

    #[test]
    fn full_liquidation() {
        let s = StorageSpec::new(10.0, 2.0, 0.9, 0.0).unwrap();
        let next = GridFunction::new(2.0, vec![0.0; 21]).unwrap();
        let (d, q) = single_stage_max(1.5, 1e6, &next, &s, Candidates::Grid);
        assert_eq!(d.soc, 0.0);
        assert!((q - 1e6 * 1.5 * 0.9).abs() < 1e-6);
    }

    #[test]
    fn negative_price_never_discharges() {
        let next = GridFunction::new(2.0, vec![0.0; 21]).unwrap();
        let (d, _) = single_stage_max(1.0, -3.0, &next, &spec(0.5), Candidates::GridAndBounds);
        assert_eq!(d.discharge, 0.0);
        assert!(d.charge > 0.0);
    }

    #[test]
    fn zero_terminal_hold_band_stays_zero() {
        let inst = DiscreteInstance::new(spec(0.5), 21, vec![vec![(5.0, 1.0)]], vec![0.0; 21]).unwrap();
        // with V ≡ 0 discharging at 5 $/MWh loses money net of c = 10
        let sol = sdp_solve(&inst).unwrap();
        assert!(sol.values[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_power_keeps_terminal() {
        let g = linear_levels(21);
        let stages = vec![vec![(20.0, 0.5), (80.0, 0.5)]; 3];
        let inst = DiscreteInstance::new(spec(0.0), 21, stages, g.levels().to_vec()).unwrap();
        let sol = sdp_solve(&inst).unwrap();
        for t in 0..=3 {
            for (a, b) in sol.values[t].iter().zip(g.levels()) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }
    }

    #[test]
    fn values_are_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let stages = (0..3)
                .map(|_| {
                    (0..4)
                        .map(|_| (rng.random_range(-10.0..120.0), 0.25))
                        .collect::<Vec<_>>()
                })
                .collect();
            let p = 0.1 * rng.random_range(1..6) as f64;
            let s = StorageSpec::new(p, 2.0, 1.0, rng.random_range(0.0..10.0)).unwrap();
            let inst = DiscreteInstance::new(s, 21, stages, linear_levels(21).levels().to_vec())
                .unwrap();
            let sol = sdp_solve(&inst).unwrap();
            for v in &sol.values {
                for w in v.windows(3) {
                    assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-9, "{w:?}");
                }
            }
        }
    }

    #[test]
    fn deterministic_sdp_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let j = rng.random_range(3..=11);
            let t = rng.random_range(1..=4);
            let s = StorageSpec::new(
                rng.random_range(0.1..1.0),
                2.0,
                rng.random_range(0.7..1.0),
                rng.random_range(0.0..10.0),
            )
            .unwrap();
            let prices: Vec<f64> = (0..t).map(|_| rng.random_range(-20.0..150.0)).collect();
            let terminal = linear_levels(j);
            let inst = DiscreteInstance::new(
                s,
                j,
                prices.iter().map(|&p| vec![(p, 1.0)]).collect(),
                terminal.levels().to_vec(),
            )
            .unwrap();
            let sol = sdp_solve(&inst).unwrap();
            for k in 0..j {
                let e = terminal.point(k);
                let best = enumerate_deterministic(&s, &terminal, &prices, e);
                assert!((sol.values[0][k] - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn guard_refuses_large_instances() {
        let stages = vec![vec![(1.0, 1.0); 10]; 100];
        let inst = DiscreteInstance::new(spec(0.5), 1001, stages, vec![0.0; 1001]).unwrap();
        assert!(matches!(
            sdp_solve(&inst),
            Err(Error::GuardExceeded { size: 1_002_001_000, .. })
        ));
    }

    #[test]
    fn finite_differences_of_quadratic() {
        let levels: Vec<f64> = (0..5).map(|k| (k * k) as f64).collect();
        assert_eq!(finite_differences(&levels, 1.0), vec![1.0, 2.0, 4.0, 6.0, 7.0]);
    }

    #[test]
    fn empirical_law_degenerate_cases() {
        let marginals: Vec<f64> = (0..21).map(|k| 100.0 - 5.0 * k as f64).collect();
        let d = PriceDistribution::point_mass(40.0).unwrap();
        let cdf = empirical_q_cdf(1.0, 0.01, &d, &marginals, &spec(0.5), 100, 1).unwrap();
        assert!(cdf.samples().windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
        let n = PriceDistribution::normal(40.0, 10.0).unwrap();
        let cdf = empirical_q_cdf(1.02, 0.01, &n, &marginals, &spec(0.0), 100, 1).unwrap();
        let next = GridFunction::from_step_marginals(2.0, &marginals).unwrap();
        let atom = (next.at(1.03) - next.at(1.01)) / 0.02;
        assert!(cdf.samples().iter().all(|&x| (x - atom).abs() < 1e-9));
        assert!((atom - 50.0).abs() < 1e-9);
        assert!(empirical_q_cdf(0.0, 0.01, &n, &marginals, &spec(0.5), 10, 1).is_err());
    }

    #[test]
    fn ks_distance_of_exact_sample() {
        let cdf = EmpiricalCdf::new(vec![3.0, 1.0, 2.0, 4.0]);
        assert_eq!(cdf.eval(2.0), 0.5);
        assert_eq!(cdf.mean(), 2.5);
        let d = cdf.ks_distance(&[0.5, 1.5, 2.5, 3.5, 4.5], |x| (x / 4.0).clamp(0.0, 1.0));
        assert!((d - 0.125).abs() < 1e-12);
    }
}
