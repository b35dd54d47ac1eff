//! Dispatch against realized prices and Monte Carlo policy evaluation.
//!
//! Given the curve `v_t` valuing SoC at the end of the period, a realized
//! price `λ` is compared with the marginal value at the starting SoC:
//! discharge while `(λ − c)η` beats the marginal value, charge while `λ/η`
//! is below it, and otherwise stay idle. The ending SoC is the point where
//! the curve crosses the relevant threshold, clamped to the power and
//! energy limits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::PriceDistribution;
use crate::error::{Error, Result};
use crate::recursion::{ValuationHorizon, ValuationResult};
use crate::storage::StorageSpec;
use crate::value_curve::ValueCurve;

/// One period's decision. Energies are MWh over the period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispatch {
    pub discharge: f64,
    pub charge: f64,
    /// SoC at the end of the period.
    pub soc: f64,
    pub profit: f64,
}

impl Dispatch {
    pub fn is_idle(&self) -> bool {
        self.discharge == 0.0 && self.charge == 0.0
    }
}

pub fn dispatch(
    e_prev: f64,
    price: f64,
    v_next: &ValueCurve,
    spec: &StorageSpec,
) -> Result<Dispatch> {
    let cap = spec.capacity();
    let marginal = v_next.eval(e_prev)?;
    let e_prev = e_prev.clamp(0.0, cap);
    let eta = spec.efficiency();
    let cost = spec.discharge_cost();
    let sell_value = (price - cost) * eta;
    let buy_value = price / eta;

    let (discharge, charge, soc) = if price > 0.0 && marginal < sell_value {
        let target = v_next.inverse_upper(sell_value, 0.0, e_prev)?;
        let soc = target.max(e_prev - spec.discharge_step()).max(0.0);
        let discharge = ((e_prev - soc) * eta).min(spec.power());
        (discharge, 0.0, soc)
    } else if marginal > buy_value {
        let target = v_next.inverse(buy_value, e_prev, cap)?;
        let soc = target.min(e_prev + spec.charge_step()).min(cap);
        let charge = ((soc - e_prev) / eta).min(spec.power());
        (0.0, charge, soc)
    } else {
        (0.0, 0.0, e_prev)
    };

    Ok(Dispatch {
        discharge,
        charge,
        soc,
        profit: price * (discharge - charge) - cost * discharge,
    })
}

/// Result of running the policy along one price path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub trace: Vec<Dispatch>,
    /// Trading profit, excluding any value of the energy left at the end.
    pub profit: f64,
    pub final_soc: f64,
}

impl PathOutcome {
    /// Value of the final SoC under `terminal`, relative to an empty device.
    pub fn terminal_value(&self, terminal: &ValueCurve) -> f64 {
        terminal.integral(self.final_soc)
    }
}

/// Applies [`dispatch`] period by period, using `curves[t]` for period `t`.
pub fn simulate_path(
    e0: f64,
    prices: &[f64],
    result: &ValuationResult,
    spec: &StorageSpec,
) -> Result<PathOutcome> {
    if prices.len() != result.horizon() {
        return Err(Error::InvalidHorizon(format!(
            "{} prices for a horizon of {} stages",
            prices.len(),
            result.horizon()
        )));
    }
    let mut soc = e0;
    let mut profit = 0.0;
    let mut trace = Vec::with_capacity(prices.len());
    for (t, &price) in prices.iter().enumerate() {
        let d = dispatch(soc, price, &result.curves[t + 1], spec).map_err(|e| e.at_stage(t + 1))?;
        soc = d.soc;
        profit += d.profit;
        trace.push(d);
    }
    Ok(PathOutcome {
        trace,
        profit,
        final_soc: soc,
    })
}

/// Draws path `index` of the stream identified by `seed`. Each path has its
/// own ChaCha stream, so paths do not depend on evaluation order.
pub fn sample_path(stages: &[PriceDistribution], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    stages.iter().map(|d| d.sample(&mut rng)).collect()
}

pub fn sample_paths(stages: &[PriceDistribution], n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n as u64).map(|i| sample_path(stages, seed, i)).collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        // shifted by the first sample so that constant input is exact
        let shift = xs.first().copied().unwrap_or(0.0);
        let offset = xs.iter().map(|x| x - shift).sum::<f64>() / n as f64;
        let mean = shift + offset;
        let std_error = if n > 1 {
            let var = xs
                .iter()
                .map(|x| (x - shift - offset) * (x - shift - offset))
                .sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub seed: u64,
    pub initial_soc: f64,
    /// Trading profit per path.
    pub profit: Estimate,
    /// Trading profit plus terminal value of the final SoC.
    pub total: Estimate,
    pub mean_final_soc: f64,
}

/// Runs the policy on each path in parallel; output order follows `paths`.
pub fn evaluate_paths(
    e0: f64,
    paths: &[Vec<f64>],
    result: &ValuationResult,
    spec: &StorageSpec,
) -> Result<Vec<PathOutcome>> {
    paths
        .par_iter()
        .map(|prices| simulate_path(e0, prices, result, spec))
        .collect()
}

pub fn summarize(
    seed: u64,
    e0: f64,
    outcomes: &[PathOutcome],
    terminal: &ValueCurve,
) -> McSummary {
    let profits: Vec<f64> = outcomes.iter().map(|o| o.profit).collect();
    let totals: Vec<f64> = outcomes
        .iter()
        .map(|o| o.profit + o.terminal_value(terminal))
        .collect();
    let mean_final_soc =
        outcomes.iter().map(|o| o.final_soc).sum::<f64>() / outcomes.len() as f64;
    McSummary {
        seed,
        initial_soc: e0,
        profit: Estimate::from_samples(&profits),
        total: Estimate::from_samples(&totals),
        mean_final_soc,
    }
}

/// Expected profit of the policy from `e0` over `n` sampled price paths.
pub fn monte_carlo(
    e0: f64,
    horizon: &ValuationHorizon,
    result: &ValuationResult,
    n: usize,
    seed: u64,
) -> Result<McSummary> {
    if n == 0 {
        return Err(Error::Config("Monte Carlo needs at least one path".into()));
    }
    let paths = sample_paths(&horizon.stages, n, seed);
    let outcomes = evaluate_paths(e0, &paths, result, &horizon.spec)?;
    Ok(summarize(seed, e0, &outcomes, &horizon.terminal))
}

/// Finite-difference estimate of `∂E[total]/∂e0` from paired simulations at
/// `e0 ± delta`, next to the curve's own value at `e0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginalCheck {
    pub soc: f64,
    pub delta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub curve_value: f64,
}

impl MarginalCheck {
    pub fn within(&self, std_errors: f64) -> bool {
        (self.estimate - self.curve_value).abs() <= std_errors * self.std_error
    }
}

pub fn marginal_check(
    e0: f64,
    delta: f64,
    horizon: &ValuationHorizon,
    result: &ValuationResult,
    n: usize,
    seed: u64,
) -> Result<MarginalCheck> {
    let cap = horizon.spec.capacity();
    let lo = (e0 - delta).max(0.0);
    let hi = (e0 + delta).min(cap);
    if hi <= lo {
        return Err(Error::Config(format!("empty finite-difference interval at {e0}")));
    }
    let paths = sample_paths(&horizon.stages, n, seed);
    let low = evaluate_paths(lo, &paths, result, &horizon.spec)?;
    let high = evaluate_paths(hi, &paths, result, &horizon.spec)?;
    let slopes: Vec<f64> = low
        .iter()
        .zip(&high)
        .map(|(a, b)| {
            let ta = a.profit + a.terminal_value(&horizon.terminal);
            let tb = b.profit + b.terminal_value(&horizon.terminal);
            (tb - ta) / (hi - lo)
        })
        .collect();
    let est = Estimate::from_samples(&slopes);
    Ok(MarginalCheck {
        soc: e0,
        delta,
        estimate: est.mean,
        std_error: est.std_error,
        curve_value: result.curves[0].eval(e0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_deterministic, GridFunction};
    use crate::recursion::backward_pass;
    use proptest::prelude::*;

    fn spec() -> StorageSpec {
        StorageSpec::new(0.5, 2.0, 0.9, 10.0).unwrap()
    }

    fn linear(j: usize) -> ValueCurve {
        ValueCurve::sample(2.0, j, |e| 100.0 * (1.0 - e / 2.0)).unwrap()
    }

    #[test]
    fn negative_price_never_discharges() {
        let v = linear(21);
        for e in [0.0, 0.5, 1.0, 2.0] {
            let d = dispatch(e, -5.0, &v, &spec()).unwrap();
            assert_eq!(d.discharge, 0.0);
            assert!(d.charge > 0.0 || e == 2.0);
        }
        let low = ValueCurve::constant(2.0, 21, -100.0).unwrap();
        let d = dispatch(1.0, -5.0, &low, &spec()).unwrap();
        assert!(d.is_idle());
    }

    #[test]
    fn hold_band_holds() {
        let v = ValueCurve::constant(2.0, 21, 50.0).unwrap();
        for lambda in [45.0, 55.0, 65.0] {
            let d = dispatch(0.7, lambda, &v, &spec()).unwrap();
            assert!(d.is_idle());
            assert_eq!(d.soc, 0.7);
            assert_eq!(d.profit, 0.0);
        }
    }

    #[test]
    fn out_of_range_soc_is_rejected() {
        assert!(dispatch(2.5, 10.0, &linear(21), &spec()).is_err());
        assert!(dispatch(-0.1, 10.0, &linear(21), &spec()).is_err());
    }

    #[test]
    fn matches_exhaustive_single_stage_search() {
        let s = spec();
        let v = linear(201);
        let (e_prev, lambda) = (1.0, 120.0);
        let d = dispatch(e_prev, lambda, &v, &s).unwrap();
        let objective = |pd: f64, pc: f64| {
            let e = e_prev - pd / s.efficiency() + pc * s.efficiency();
            (0.0..=2.0)
                .contains(&e)
                .then(|| lambda * (pd - pc) - s.discharge_cost() * pd + v.integral(e))
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..=500 {
            for k in 0..=500 {
                if let Some(x) = objective(i as f64 * 1e-3, k as f64 * 1e-3) {
                    best = best.max(x);
                }
            }
        }
        let ours = d.profit + v.integral(d.soc);
        assert!(best - ours < 0.05, "{best} vs {ours}");
        assert!(d.discharge > 0.0);
    }

    #[test]
    fn point_mass_paths_have_zero_error() {
        let stages = vec![PriceDistribution::point_mass(30.0).unwrap(); 4];
        let h = ValuationHorizon::new(spec(), stages, linear(21)).unwrap();
        let r = backward_pass(&h).unwrap();
        let mc = monte_carlo(1.0, &h, &r, 50, 9).unwrap();
        assert_eq!(mc.total.std_error, 0.0);
        let single = simulate_path(1.0, &[30.0; 4], &r, &h.spec).unwrap();
        assert_eq!(mc.profit.mean, single.profit);
    }

    #[test]
    fn hold_band_path_is_idle() {
        let stages = vec![PriceDistribution::point_mass(55.0).unwrap(); 3];
        let h = ValuationHorizon::new(spec(), stages, ValueCurve::constant(2.0, 21, 50.0).unwrap())
            .unwrap();
        let r = backward_pass(&h).unwrap();
        let out = simulate_path(0.4, &[50.0, 60.0, 46.0], &r, &h.spec).unwrap();
        assert_eq!(out.profit, 0.0);
        assert_eq!(out.final_soc, 0.4);
        assert!(out.trace.iter().all(Dispatch::is_idle));
        assert!(simulate_path(0.4, &[50.0], &r, &h.spec).is_err());
    }

    #[test]
    fn two_stage_deterministic_matches_enumeration() {
        // Pη = 0.2 and P/η = 0.4 on the 0.1 grid
        let eta = 0.5f64.sqrt();
        let s = StorageSpec::new(0.1 * 8f64.sqrt(), 2.0, eta, 5.0).unwrap();
        let terminal = ValueCurve::sample(2.0, 21, |e| 60.0 - 10.0 * e).unwrap();
        let prices = [10.0, 200.0];
        let stages = prices.iter().map(|&p| PriceDistribution::point_mass(p).unwrap()).collect();
        let h = ValuationHorizon::new(s, stages, terminal.clone()).unwrap();
        let r = backward_pass(&h).unwrap();
        let levels = GridFunction::from_marginals(2.0, terminal.values()).unwrap();
        for e0 in [0.0, 0.6, 1.0, 2.0] {
            let out = simulate_path(e0, &prices, &r, &s).unwrap();
            assert!(out.trace[0].charge > 0.0 || e0 == 2.0);
            assert!(out.trace[1].discharge > 0.0);
            let ours = out.profit + out.terminal_value(&terminal);
            let best = enumerate_deterministic(&s, &levels, &prices, e0);
            assert!((ours - best).abs() < 1e-9, "e0 = {e0}: {ours} vs {best}");
        }
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let stages = vec![PriceDistribution::normal(50.0, 20.0).unwrap(); 6];
        let h = ValuationHorizon::new(spec(), stages, linear(41)).unwrap();
        let r = backward_pass(&h).unwrap();
        let a = monte_carlo(1.0, &h, &r, 200, 4).unwrap();
        let b = monte_carlo(1.0, &h, &r, 200, 4).unwrap();
        assert_eq!(a.total, b.total);
        assert_eq!(sample_path(&h.stages, 4, 17), sample_paths(&h.stages, 18, 4)[17]);
        assert!(monte_carlo(1.0, &h, &r, 0, 4).is_err());
    }

    #[test]
    fn marginal_check_agrees_with_curve() {
        let stages = vec![PriceDistribution::normal(50.0, 20.0).unwrap(); 6];
        let h = ValuationHorizon::new(spec(), stages, linear(41)).unwrap();
        let r = backward_pass(&h).unwrap();
        let m = marginal_check(1.0, 2.0 * h.terminal.step(), &h, &r, 4000, 12).unwrap();
        assert!(m.within(3.0), "{m:?}");
    }

    proptest! {
        #[test]
        fn dispatch_is_feasible(
            e_frac in 0.0..=1.0f64,
            price in -100.0..300.0f64,
            p in 0.0..3.0f64,
            eta in 0.3..=1.0f64,
            c in 0.0..30.0f64,
            top in -50.0..200.0f64,
            drop in 0.0..200.0f64,
        ) {
            let s = StorageSpec::new(p, 2.0, eta, c).unwrap();
            let v = ValueCurve::sample(2.0, 41, |e| top - drop * e / 2.0).unwrap();
            let e = 2.0 * e_frac;
            let d = dispatch(e, price, &v, &s).unwrap();
            prop_assert!(d.charge >= 0.0 && d.charge <= p);
            prop_assert!(d.discharge >= 0.0 && d.discharge <= p);
            prop_assert!(d.charge == 0.0 || d.discharge == 0.0);
            prop_assert!(price > 0.0 || d.discharge == 0.0);
            prop_assert!((0.0..=2.0).contains(&d.soc));
            let balance = e - d.discharge / eta + d.charge * eta;
            prop_assert!((balance - d.soc).abs() < 1e-9);
        }
    }
}
