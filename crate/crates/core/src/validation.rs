//! Cross-checks between the analytical recursion and the brute-force
//! reference.

use serde::Serialize;

use crate::distributions::PriceDistribution;
use crate::error::Result;
use crate::oracle::{self, empirical_q_cdf, DiscreteInstance, GridFunction, SdpSolution};
use crate::recursion::{soc_price_cdf, Thresholds, ValuationResult};
use crate::storage::StorageSpec;
use crate::value_curve::ValueCurve;

/// Largest `|v_k − v_{k+1}| / Δe` over indices within `window` of `j`,
/// across all `curves`.
pub fn local_slope(curves: &[&[f64]], j: usize, window: usize, step: f64) -> f64 {
    let mut slope: f64 = 0.0;
    for c in curves {
        let lo = j.saturating_sub(window);
        let hi = (j + window).min(c.len() - 1);
        for k in lo..hi {
            slope = slope.max((c[k] - c[k + 1]).abs() / step);
        }
    }
    slope
}

/// Grid cells spanned by one full-power move, plus one.
pub fn move_window(spec: &StorageSpec, step: f64) -> usize {
    (spec.charge_step().max(spec.discharge_step()) / step).ceil() as usize + 1
}

#[derive(Debug, Clone, Serialize)]
pub struct StageDeviation {
    pub stage: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Largest deviation over its allowance `2·slope·Δe`.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub stages: Vec<StageDeviation>,
    pub max_abs: f64,
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Compares `result.curves[t]` with the finite-difference marginals of the
/// reference solution. The allowance at grid point `j` is
/// `2·slope·Δe`, the slope taken over curves `t` and `t+1` within one
/// full-power move of `j`.
pub fn compare_with_oracle(result: &ValuationResult, sdp: &SdpSolution, spec: &StorageSpec) -> OracleComparison {
    let t_max = result.horizon();
    let step = result.curves[0].step();
    let window = move_window(spec, step);
    let mut stages = Vec::with_capacity(t_max + 1);
    let mut passed = true;
    for t in 0..=t_max {
        let ours = result.curves[t].values();
        let theirs = &sdp.marginals[t];
        let around: Vec<&[f64]> = (t..=(t + 1).min(t_max)).map(|k| result.curves[k].values()).collect();
        let mut max_abs: f64 = 0.0;
        let mut sum = 0.0;
        let mut worst_ratio: f64 = 0.0;
        for (j, (a, b)) in ours.iter().zip(theirs).enumerate() {
            let dev = (a - b).abs();
            let allowance = 2.0 * local_slope(&around, j, window, step) * step;
            let noise = 1e-9 * (1.0 + b.abs());
            if dev > allowance + noise {
                passed = false;
            }
            if dev > noise {
                worst_ratio = worst_ratio.max(dev / allowance);
            }
            max_abs = max_abs.max(dev);
            sum += dev;
        }
        stages.push(StageDeviation {
            stage: t,
            max_abs,
            mean_abs: sum / ours.len() as f64,
            worst_ratio,
        });
    }
    OracleComparison {
        max_abs: stages.iter().map(|s| s.max_abs).fold(0.0, f64::max),
        worst_ratio: stages.iter().map(|s| s.worst_ratio).fold(0.0, f64::max),
        stages,
        passed,
    }
}

/// Best total (trading profit plus terminal value) with the whole price
/// path known in advance, by backward induction on the curve's grid.
pub fn perfect_information(
    spec: &StorageSpec,
    terminal: &ValueCurve,
    prices: &[f64],
    e0: f64,
) -> Result<f64> {
    let inst = DiscreteInstance::new(
        *spec,
        terminal.len(),
        prices.iter().map(|&p| vec![(p, 1.0)]).collect(),
        GridFunction::from_marginals(terminal.capacity(), terminal.values())?.levels().to_vec(),
    )?;
    let sol = oracle::sdp_solve(&inst)?;
    Ok(GridFunction::new(terminal.capacity(), sol.values[0].clone())?.at(e0))
}

#[derive(Debug, Clone, Serialize)]
pub struct LawCheck {
    pub soc: f64,
    pub delta: f64,
    pub n: usize,
    pub ks: f64,
}

/// Points at which [`law_check`] compares the two CDFs.
pub const LAW_PROBES: usize = 2000;

/// Kolmogorov–Smirnov distance between `soc_price_cdf` and the empirical
/// law of single-period finite-difference marginals at `e`.
///
/// The distance is taken over an even grid of [`LAW_PROBES`] points
/// spanning the sample, plus points just below and just above each atom of
/// the law (including the images of a discrete price law's support). Grid points closer than that to an atom are skipped, since
/// finite-difference rounding scatters the sampled atom on both sides of
/// its exact location.
pub fn law_check(
    e: f64,
    delta: f64,
    dist: &PriceDistribution,
    v_next: &ValueCurve,
    spec: &StorageSpec,
    n: usize,
    seed: u64,
) -> Result<LawCheck> {
    let empirical = empirical_q_cdf(e, delta, dist, v_next.values(), spec, n, seed)?;
    let th = Thresholds::at(e, v_next, spec);
    let samples = empirical.samples();
    let (lo, hi) = (samples[0], samples[samples.len() - 1]);
    let mut atoms: Vec<f64> = [Some(th.hold), th.charge, th.discharge].into_iter().flatten().collect();
    // a discrete price law maps its support through λ/η and (λ−c)η
    let (eta, c) = (spec.efficiency(), spec.discharge_cost());
    for (price, _) in dist.support().unwrap_or_default() {
        atoms.extend([price / eta, (price - c) * eta]);
    }
    let gap = |x: f64| 1e-6 * (1.0 + x.abs());
    let (lo, hi) = (lo - 1.0, hi + 1.0);
    let mut probes: Vec<f64> = (0..=LAW_PROBES)
        .map(|k| lo + (hi - lo) * k as f64 / LAW_PROBES as f64)
        .filter(|&x| atoms.iter().all(|&a| (x - a).abs() > gap(a)))
        .collect();
    for &atom in &atoms {
        probes.push(atom - gap(atom));
        probes.push(atom + gap(atom));
    }
    let mut worst: f64 = 0.0;
    for &x in &probes {
        let g = soc_price_cdf(x, e, v_next, dist, spec)?;
        worst = worst.max((empirical.eval(x) - g).abs());
    }
    Ok(LawCheck {
        soc: e,
        delta,
        n,
        ks: worst,
    })
}

/// `∫ x dG(x)` for the law `G` of the marginal value at `e`, by a
/// Riemann–Stieltjes sum over `cells` equal cells, evaluating `x` at cell
/// midpoints. Tails beyond the `1e-12` price quantiles are ignored.
pub fn stieltjes_mean(
    e: f64,
    v_next: &ValueCurve,
    dist: &PriceDistribution,
    spec: &StorageSpec,
    cells: usize,
) -> Result<f64> {
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let values = v_next.values();
    let (first, last) = (values[0], values[values.len() - 1]);
    let lo = (dist.quantile(1e-12) / eta).min(last) - 1.0;
    let hi = ((dist.quantile(1.0 - 1e-12) - c) * eta).max(first) + 1.0;
    let w = (hi - lo) / cells as f64;
    let mut prev = soc_price_cdf(lo, e, v_next, dist, spec)?;
    let mut sum = lo * prev;
    for k in 1..=cells {
        let x = lo + w * k as f64;
        let g = soc_price_cdf(x, e, v_next, dist, spec)?;
        sum += (x - 0.5 * w) * (g - prev);
        prev = g;
    }
    Ok(sum + hi * (1.0 - prev))
}
