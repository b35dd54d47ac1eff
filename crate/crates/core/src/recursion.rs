//! Backward recursion for the marginal value of stored energy.
//!
//! Given the next-period curve `v_t` and the stage price distribution
//! `F_t`, the marginal value `q_{t−1}(e)` of the single-period problem is a
//! random variable whose law is piecewise: an atom at `v_t(e+Pη)` (charging
//! at full power), a continuous part following `λ/η` (charging to an
//! interior optimum), an atom at `v_t(e)` (idle), a part following
//! `(λ−c)η` (discharging to an interior optimum) and an atom at
//! `v_t(e−P/η)` (discharging at full power). Its expectation is
//! `v_{t−1}(e)`.
//!
//! When a full-power move would leave `[0, E]` the corresponding atom is
//! pushed to `∓∞`: its weight times its location vanishes in the limit and
//! the neighbouring continuous part extends to an infinite bound.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::distributions::PriceDistribution;
use crate::error::{Error, Result};
use crate::storage::StorageSpec;
use crate::value_curve::ValueCurve;

/// Relative slack for deciding that a full-power move leaves `[0, E]`.
const SATURATION_SLACK: f64 = 1e-12;

/// `[x]⁺`
fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Curve values at the three SoC levels a single period can end at.
///
/// `charge` is `v(e + Pη)` and `discharge` is `v(e − P/η)`; `None` marks a
/// move that would exit `[0, E]` (value `−∞` resp. `+∞`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub charge: Option<f64>,
    pub hold: f64,
    pub discharge: Option<f64>,
}

impl Thresholds {
    pub fn at(e: f64, v_next: &ValueCurve, spec: &StorageSpec) -> Self {
        let cap = spec.capacity();
        let up = e + spec.charge_step();
        let down = e - spec.discharge_step();
        let slack = SATURATION_SLACK * cap;
        Self {
            charge: (up <= cap + slack).then(|| v_next.value_at(up)),
            hold: v_next.value_at(e),
            discharge: (down >= -slack).then(|| v_next.value_at(down)),
        }
    }
}

/// `Pr[q_{t−1}(e) ≤ x]`.
pub fn soc_price_cdf(
    x: f64,
    e: f64,
    v_next: &ValueCurve,
    dist: &PriceDistribution,
    spec: &StorageSpec,
) -> Result<f64> {
    check_soc(e, spec)?;
    let th = Thresholds::at(e, v_next, spec);
    Ok(cdf_given_thresholds(x, &th, dist, spec))
}

fn cdf_given_thresholds(
    x: f64,
    th: &Thresholds,
    dist: &PriceDistribution,
    spec: &StorageSpec,
) -> f64 {
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    if matches!(th.charge, Some(vc) if x < vc) {
        0.0
    } else if x < th.hold {
        dist.cdf(x * eta)
    } else if th.discharge.is_none_or(|vd| x < vd) {
        dist.cdf(positive_part(x / eta + c))
    } else {
        1.0
    }
}

/// `E[q_{t−1}(e)]` for a single SoC.
///
/// The sum is arranged around `v(e)`: each group below is one piece of the
/// law of `q` minus `v(e)` times that piece's probability, so the groups
/// vanish identically when the three thresholds coincide.
pub fn expected_marginal(
    e: f64,
    v_next: &ValueCurve,
    dist: &PriceDistribution,
    spec: &StorageSpec,
) -> f64 {
    let th = Thresholds::at(e, v_next, spec);
    expectation_given_thresholds(&th, dist, spec)
}

fn expectation_given_thresholds(th: &Thresholds, dist: &PriceDistribution, spec: &StorageSpec) -> f64 {
    let eta = spec.efficiency();
    let c = spec.discharge_cost();
    let v = th.hold;

    // Price breakpoints: below `charge_top` the device charges, above
    // `discharge_bottom` it discharges.
    let charge_top = v * eta;
    let discharge_bottom = positive_part(v / eta + c);

    let mut total = v;

    // Charging: atom at v(e+Pη) for λ ≤ v(e+Pη)η, then q = λ/η.
    let charge_floor = match th.charge {
        Some(vc) => {
            let floor = vc * eta;
            total += (vc - v) * dist.cdf(floor);
            floor
        }
        None => f64::NEG_INFINITY,
    };
    total += dist.partial_expectation_unchecked(charge_floor, charge_top) / eta
        - v * dist.mass(charge_floor, charge_top);

    // Discharging: q = (λ−c)η, then atom at v(e−P/η).
    let discharge_ceiling = match th.discharge {
        Some(vd) => {
            let ceiling = positive_part(vd / eta + c);
            total += (vd - v) * (1.0 - dist.cdf(ceiling));
            ceiling
        }
        None => f64::INFINITY,
    };
    let mass = dist.mass(discharge_bottom, discharge_ceiling);
    total += eta * dist.partial_expectation_unchecked(discharge_bottom, discharge_ceiling)
        - (c * eta + v) * mass;

    total
}

/// One step of the recursion: `v_{t−1}` on the grid of `v_next`.
pub fn backward_step(
    v_next: &ValueCurve,
    dist: &PriceDistribution,
    spec: &StorageSpec,
) -> Result<ValueCurve> {
    let mut out = Vec::with_capacity(v_next.len());
    backward_step_into(v_next, dist, spec, &mut out);
    v_next.with_values(out)
}

fn backward_step_into(
    v_next: &ValueCurve,
    dist: &PriceDistribution,
    spec: &StorageSpec,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend((0..v_next.len()).map(|j| {
        let e = v_next.grid_point(j);
        expected_marginal(e, v_next, dist, spec)
    }));
}

/// Storage device, per-stage price distributions (stage 1 first) and the
/// end-of-horizon curve `v_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationHorizon {
    pub spec: StorageSpec,
    pub stages: Vec<PriceDistribution>,
    pub terminal: ValueCurve,
}

impl ValuationHorizon {
    pub fn new(
        spec: StorageSpec,
        stages: Vec<PriceDistribution>,
        terminal: ValueCurve,
    ) -> Result<Self> {
        let h = Self {
            spec,
            stages,
            terminal,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidHorizon("at least one stage is required".into()));
        }
        let (a, b) = (self.terminal.capacity(), self.spec.capacity());
        if (a - b).abs() > 1e-12 * b {
            return Err(Error::InvalidHorizon(format!(
                "terminal curve capacity {a} differs from storage capacity {b}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Appends `repeats` copies of the last `period` stages, a simple
    /// steady-state extension so the value does not collapse to the
    /// terminal curve at the end of a short forecast.
    pub fn with_repeated_tail(mut self, period: usize, repeats: usize) -> Result<Self> {
        if period == 0 || period > self.stages.len() {
            return Err(Error::InvalidHorizon(format!(
                "cannot repeat the last {period} of {} stages",
                self.stages.len()
            )));
        }
        let tail = self.stages[self.stages.len() - period..].to_vec();
        for _ in 0..repeats {
            self.stages.extend(tail.iter().cloned());
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(s)?;
        h.validate()?;
        Ok(h)
    }
}

/// Curves for every stage boundary `t = 0..=T`; `curves[T]` is the terminal
/// curve and `curves[t]` values SoC at the end of period `t`.
#[derive(Debug, Clone)]
pub struct ValuationResult {
    pub curves: Vec<ValueCurve>,
    /// Wall time of each backward step, indexed like `curves` (zero for the
    /// terminal entry).
    pub stage_times: Vec<Duration>,
}

impl ValuationResult {
    pub fn horizon(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn initial(&self) -> &ValueCurve {
        &self.curves[0]
    }
}

/// Runs the recursion from `v_T` back to `v_0`, keeping every curve.
pub fn backward_pass(h: &ValuationHorizon) -> Result<ValuationResult> {
    h.validate()?;
    let t_max = h.stages.len();
    let mut curves = Vec::with_capacity(t_max + 1);
    let mut stage_times = vec![Duration::ZERO; t_max + 1];
    curves.push(h.terminal.clone());
    for t in (1..=t_max).rev() {
        let started = Instant::now();
        let next = curves.last().unwrap();
        let prev = backward_step(next, &h.stages[t - 1], &h.spec).map_err(|e| e.at_stage(t))?;
        stage_times[t - 1] = started.elapsed();
        curves.push(prev);
    }
    curves.reverse();
    Ok(ValuationResult {
        curves,
        stage_times,
    })
}

/// Runs the recursion keeping only two curves alive; `visit(t, curve)` sees
/// each `v_t` from `t = T` down to `t = 0`. Returns `v_0`.
pub fn backward_pass_with<F>(h: &ValuationHorizon, mut visit: F) -> Result<ValueCurve>
where
    F: FnMut(usize, &ValueCurve),
{
    h.validate()?;
    let t_max = h.stages.len();
    let mut current = h.terminal.clone();
    let mut scratch = Vec::with_capacity(current.len());
    visit(t_max, &current);
    for t in (1..=t_max).rev() {
        backward_step_into(&current, &h.stages[t - 1], &h.spec, &mut scratch);
        let mut values = std::mem::take(&mut scratch);
        crate::value_curve::repair_monotone(&mut values).map_err(|e| e.at_stage(t))?;
        let prev = current.with_values(values).map_err(|e| e.at_stage(t))?;
        scratch = std::mem::replace(&mut current, prev).into_values();
        visit(t - 1, &current);
    }
    Ok(current)
}

fn check_soc(e: f64, spec: &StorageSpec) -> Result<()> {
    let cap = spec.capacity();
    if e.is_nan() || e < -1e-9 * cap || e > cap * (1.0 + 1e-9) {
        return Err(Error::SocOutOfRange { soc: e, capacity: cap });
    }
    Ok(())
}
