//! Discretized marginal value of stored energy.
//!
//! A [`ValueCurve`] holds `v_j`, the $/MWh value of one more unit of energy
//! at the equally spaced SoC samples `e_j = j·Δe`, `j = 0..J−1`, with
//! `Δe·(J−1) = E`. The stored sequence is always non-increasing, which is
//! what makes the integrated value function concave.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for repairing monotonicity violations caused by
/// floating-point noise. Larger rises are rejected.
pub const MONOTONE_TOLERANCE: f64 = 1e-7;

/// Relative slack when checking that an SoC lies in `[0, E]`.
const RANGE_SLACK: f64 = 1e-9;

/// How off-grid SoC values are looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lookup {
    /// Value of the nearest sample; exact halfway ties go to the lower index.
    #[default]
    Nearest,
    /// Linear interpolation between neighbouring samples.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct ValueCurve {
    capacity: f64,
    step: f64,
    values: Vec<f64>,
    lookup: Lookup,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCurve {
    capacity_mwh: f64,
    #[serde(default)]
    lookup: Lookup,
    values: Vec<f64>,
}

impl ValueCurve {
    /// Builds a curve from samples on the uniform grid over `[0, capacity]`.
    ///
    /// Rises smaller than [`MONOTONE_TOLERANCE`] × max|v| are clipped away
    /// with a running minimum; anything larger is an error.
    pub fn new(capacity: f64, mut values: Vec<f64>) -> Result<Self> {
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(Error::InvalidCurve(format!("capacity {capacity} must be positive")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "need at least two samples, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value {bad}")));
        }
        repair_monotone(&mut values)?;
        let step = capacity / (values.len() - 1) as f64;
        Ok(Self {
            capacity,
            step,
            values,
            lookup: Lookup::Nearest,
        })
    }

    /// Samples `g` at `grid_points` equally spaced SoC values and clips the
    /// result to be non-increasing (running minimum).
    pub fn sample<F: Fn(f64) -> f64>(capacity: f64, grid_points: usize, g: F) -> Result<Self> {
        if grid_points < 2 {
            return Err(Error::InvalidCurve(format!(
                "need at least two grid points, got {grid_points}"
            )));
        }
        let last = (grid_points - 1) as f64;
        let mut values: Vec<f64> = (0..grid_points)
            .map(|j| g(capacity * j as f64 / last))
            .collect();
        let mut running = f64::INFINITY;
        for v in &mut values {
            running = running.min(*v);
            *v = running;
        }
        Self::new(capacity, values)
    }

    /// Like [`ValueCurve::sample`], with the grid given by its spacing.
    /// `capacity` must be an integer multiple of `step`.
    pub fn from_function<F: Fn(f64) -> f64>(capacity: f64, step: f64, g: F) -> Result<Self> {
        Self::sample(capacity, grid_points_for(capacity, step)?, g)
    }

    pub fn constant(capacity: f64, grid_points: usize, value: f64) -> Result<Self> {
        Self::sample(capacity, grid_points, |_| value)
    }

    /// `value` for SoC up to `fraction · capacity`, zero above it.
    pub fn step_target(capacity: f64, grid_points: usize, fraction: f64, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidCurve(format!("step fraction {fraction} outside [0, 1]")));
        }
        let threshold = fraction * capacity;
        Self::sample(capacity, grid_points, |e| if e <= threshold { value } else { 0.0 })
    }

    pub fn with_lookup(mut self, lookup: Lookup) -> Self {
        self.lookup = lookup;
        self
    }

    /// Same grid and lookup mode, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidCurve(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self::new(self.capacity, values)?.with_lookup(self.lookup))
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn lookup(&self) -> Lookup {
        self.lookup
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        self.capacity * j as f64 / (self.values.len() - 1) as f64
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| self.grid_point(j))
    }

    /// Marginal value at SoC 0 minus marginal value at full SoC.
    pub fn range(&self) -> f64 {
        self.values[0] - self.values[self.values.len() - 1]
    }

    /// Index of the sample nearest to `e`; halfway ties round down.
    pub fn nearest_index(&self, e: f64) -> usize {
        let x = (e / self.step - 0.5).ceil();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.values.len() - 1)
        }
    }

    /// Looks up `v(e)`, errors if `e` lies outside `[0, E]`.
    pub fn eval(&self, e: f64) -> Result<f64> {
        self.check_range(e)?;
        Ok(self.value_at(e))
    }

    /// Looks up `v(e)` with `e` clamped into `[0, E]`.
    pub fn value_at(&self, e: f64) -> f64 {
        match self.lookup {
            Lookup::Nearest => self.values[self.nearest_index(e)],
            Lookup::Linear => {
                let x = (e / self.step).clamp(0.0, (self.values.len() - 1) as f64);
                let k = (x.floor() as usize).min(self.values.len() - 2);
                let frac = x - k as f64;
                self.values[k] + frac * (self.values[k + 1] - self.values[k])
            }
        }
    }

    /// Lowest SoC in `[lo, hi]` at which the curve has dropped to `y` or
    /// below; `hi` if it never does.
    ///
    /// With nearest lookup the answer is `lo`, `hi` or a grid point in
    /// between. A flat segment equal to `y` yields its lowest sample. When `y`
    /// falls strictly between two neighbouring samples, the answer is the one
    /// nearer to where the straight line through them crosses `y`, with
    /// exact halves going to the lower SoC. On a grid this is the best
    /// single-stage charging target, since the level gained by charging one
    /// cell is the cell-average marginal value.
    pub fn inverse(&self, y: f64, lo: f64, hi: f64) -> Result<f64> {
        self.check_bounds(lo, hi)?;
        if self.value_at(lo) <= y {
            return Ok(lo);
        }
        let inner = self.interior(lo, hi);
        // first interior grid point whose value is <= y
        let hit = inner.and_then(|(first, last)| {
            let offset = self.values[first..=last].partition_point(|&v| v > y);
            (first + offset <= last).then_some(first + offset)
        });
        let right = hit.map_or(hi, |j| self.grid_point(j));
        let v_right = self.value_at(right);
        if v_right > y {
            return Ok(hi);
        }
        let left = match (hit, inner) {
            (Some(j), Some((first, _))) if j > first => self.grid_point(j - 1),
            (None, Some((_, last))) => self.grid_point(last),
            _ => lo,
        };
        let v_left = self.value_at(left);
        Ok(match self.lookup {
            Lookup::Nearest => round_crossing(left, v_left, right, v_right, y, left),
            Lookup::Linear => interpolate_crossing(left, v_left, right, v_right, y),
        })
    }

    /// Highest SoC in `[lo, hi]` at which the curve is still at `y` or
    /// above; `lo` if it never is. Mirror image of [`ValueCurve::inverse`],
    /// used when moving down the curve; exact halves go to the higher SoC.
    pub fn inverse_upper(&self, y: f64, lo: f64, hi: f64) -> Result<f64> {
        self.check_bounds(lo, hi)?;
        if self.value_at(hi) >= y {
            return Ok(hi);
        }
        let inner = self.interior(lo, hi);
        // last interior grid point whose value is >= y
        let hit = inner.and_then(|(first, last)| {
            let count = self.values[first..=last].partition_point(|&v| v >= y);
            (count > 0).then(|| first + count - 1)
        });
        let left = hit.map_or(lo, |j| self.grid_point(j));
        let v_left = self.value_at(left);
        if v_left < y {
            return Ok(lo);
        }
        let right = match (hit, inner) {
            (Some(j), Some((_, last))) if j < last => self.grid_point(j + 1),
            (None, Some((first, _))) => self.grid_point(first),
            _ => hi,
        };
        let v_right = self.value_at(right);
        Ok(match self.lookup {
            Lookup::Nearest => round_crossing(left, v_left, right, v_right, y, right),
            Lookup::Linear => interpolate_crossing(left, v_left, right, v_right, y),
        })
    }

    /// `∫_0^e v(s) ds`, the value-function level relative to an empty device.
    pub fn integral(&self, e: f64) -> f64 {
        let e = e.clamp(0.0, self.capacity);
        let h = self.step;
        match self.lookup {
            Lookup::Nearest => {
                let k = self.nearest_index(e);
                let mut total = 0.0;
                let mut start = 0.0;
                for j in 0..k {
                    let end = self.grid_point(j) + 0.5 * h;
                    total += self.values[j] * (end - start);
                    start = end;
                }
                total + self.values[k] * (e - start)
            }
            Lookup::Linear => {
                let x = e / h;
                let k = (x.floor() as usize).min(self.values.len() - 1);
                let mut total = 0.0;
                for j in 0..k {
                    total += 0.5 * h * (self.values[j] + self.values[j + 1]);
                }
                let ek = self.grid_point(k);
                total + 0.5 * (e - ek) * (self.values[k] + self.value_at(e))
            }
        }
    }

    fn check_range(&self, e: f64) -> Result<()> {
        let slack = RANGE_SLACK * self.capacity;
        if e.is_nan() || e < -slack || e > self.capacity + slack {
            return Err(Error::SocOutOfRange {
                soc: e,
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    fn check_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        self.check_range(lo)?;
        self.check_range(hi)?;
        if lo > hi {
            return Err(Error::InvalidInterval { lower: lo, upper: hi });
        }
        Ok(())
    }

    /// Number of grid points `e_j` satisfying `pred(e_j)`, for a predicate
    /// that holds on a prefix of the grid.
    fn count_prefix(&self, x: f64, pred: impl Fn(f64, f64) -> bool) -> usize {
        let n = self.values.len();
        let mut j = ((x / self.step).floor().max(0.0) as usize).min(n);
        while j > 0 && !pred(self.grid_point(j - 1), x) {
            j -= 1;
        }
        while j < n && pred(self.grid_point(j), x) {
            j += 1;
        }
        j
    }

    /// Index range of grid points strictly inside `(lo, hi)`.
    fn interior(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let first = self.count_prefix(lo, |e, x| e <= x);
        let end = self.count_prefix(hi, |e, x| e < x);
        (first < end).then(|| (first, end - 1))
    }
}

/// Number of grid points for a capacity that must be a multiple of `step`.
pub fn grid_points_for(capacity: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !(capacity > 0.0) {
        return Err(Error::InvalidCurve(format!(
            "capacity {capacity} and step {step} must be positive"
        )));
    }
    let cells = (capacity / step).round();
    if cells < 1.0 || (cells * step - capacity).abs() > 1e-9 * capacity {
        return Err(Error::InvalidCurve(format!(
            "capacity {capacity} is not a multiple of step {step}"
        )));
    }
    Ok(cells as usize + 1)
}

fn interpolate_crossing(left: f64, v_left: f64, right: f64, v_right: f64, y: f64) -> f64 {
    if v_left == v_right || right <= left {
        return left;
    }
    let t = ((v_left - y) / (v_left - v_right)).clamp(0.0, 1.0);
    left + t * (right - left)
}

/// Of two neighbouring samples bracketing `y`, the one nearer to the
/// crossing of the line through them; `tie` when `y` is their average.
fn round_crossing(left: f64, v_left: f64, right: f64, v_right: f64, y: f64, tie: f64) -> f64 {
    let mid = 0.5 * (v_left + v_right);
    if y > mid {
        left
    } else if y < mid {
        right
    } else {
        tie
    }
}

/// Clips small rises with a running minimum; rejects large ones.
pub(crate) fn repair_monotone(values: &mut [f64]) -> Result<()> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = MONOTONE_TOLERANCE * scale;
    let mut running = f64::INFINITY;
    for (index, v) in values.iter_mut().enumerate() {
        if *v > running {
            let excess = *v - running;
            if excess > tolerance {
                return Err(Error::NotMonotone {
                    index,
                    excess,
                    tolerance,
                });
            }
            *v = running;
        }
        running = *v;
    }
    Ok(())
}

impl TryFrom<RawCurve> for ValueCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        Ok(Self::new(raw.capacity_mwh, raw.values)?.with_lookup(raw.lookup))
    }
}

impl From<ValueCurve> for RawCurve {
    fn from(c: ValueCurve) -> Self {
        Self {
            capacity_mwh: c.capacity,
            lookup: c.lookup,
            values: c.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three() -> ValueCurve {
        ValueCurve::new(2.0, vec![100.0, 50.0, 0.0]).unwrap()
    }

    #[test]
    fn eval_nearest() {
        let c = three();
        assert_eq!(c.eval(0.0).unwrap(), 100.0);
        assert_eq!(c.eval(0.49).unwrap(), 100.0);
        assert_eq!(c.eval(0.51).unwrap(), 50.0);
        assert_eq!(c.eval(0.5).unwrap(), 100.0);
        assert_eq!(c.eval(1.5).unwrap(), 50.0);
        assert_eq!(c.eval(2.0).unwrap(), 0.0);
        assert!(matches!(c.eval(2.1), Err(Error::SocOutOfRange { .. })));
        assert!(c.eval(-0.01).is_err());
    }

    #[test]
    fn eval_linear() {
        let c = three().with_lookup(Lookup::Linear);
        assert_eq!(c.eval(0.5).unwrap(), 75.0);
        assert_eq!(c.eval(2.0).unwrap(), 0.0);
        assert_eq!(c.eval(1.25).unwrap(), 37.5);
    }

    #[test]
    fn inverse_examples() {
        let c = three();
        assert_eq!(c.inverse(50.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(c.inverse(200.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(c.inverse(-1.0, 0.0, 2.0).unwrap(), 2.0);
        let flat = ValueCurve::new(2.0, vec![80.0, 80.0, 0.0]).unwrap();
        assert_eq!(flat.inverse(80.0, 0.0, 2.0).unwrap(), 0.0);
        assert!(matches!(c.inverse(50.0, 1.5, 1.0), Err(Error::InvalidInterval { .. })));
    }

    #[test]
    fn inverse_flat_tie_matches_single_stage_search() {
        // Charging from SoC 0 at a price whose efficiency-adjusted value is
        // exactly 80: every end point on the flat segment earns the same, and
        // the least-movement choice is SoC 0.
        let flat = ValueCurve::new(2.0, vec![80.0, 80.0, 0.0]).unwrap();
        let y = 80.0;
        let objective = |e_end: f64| -y * e_end + flat.integral(e_end);
        let best = (0..=2000)
            .map(|k| k as f64 * 1e-3)
            .map(|e| (e, objective(e)))
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        assert_eq!(best.0, 0.0);
        assert_eq!(flat.inverse(y, 0.0, 2.0).unwrap(), best.0);
    }

    #[test]
    fn inverse_upper_examples() {
        let c = three();
        assert_eq!(c.inverse_upper(50.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(c.inverse_upper(200.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(c.inverse_upper(-1.0, 0.0, 2.0).unwrap(), 2.0);
        let flat = ValueCurve::new(2.0, vec![80.0, 80.0, 0.0]).unwrap();
        assert_eq!(flat.inverse_upper(80.0, 0.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn inverse_rounds_between_samples() {
        let c = three();
        assert_eq!(c.inverse(80.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(c.inverse(75.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(c.inverse(70.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(c.inverse_upper(80.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(c.inverse_upper(75.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(c.inverse_upper(70.0, 0.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn inverse_is_the_best_grid_target() {
        let c = ValueCurve::new(3.0, vec![90.0, 71.0, 70.0, 20.0, 5.0, 4.0, 0.0]).unwrap();
        let grid: Vec<f64> = (0..c.len()).map(|j| c.grid_point(j)).collect();
        for k in 0..=200 {
            let y = -5.0 + k as f64 * 0.5;
            let trapezoid = |e: f64| {
                let j = (e / c.step()).round() as usize;
                (0..j).map(|i| 0.5 * c.step() * (c.values()[i] + c.values()[i + 1])).sum::<f64>() - y * e
            };
            let best = grid
                .iter()
                .map(|&e| trapezoid(e))
                .fold(f64::NEG_INFINITY, f64::max);
            let up = c.inverse(y, 0.0, 3.0).unwrap();
            let down = c.inverse_upper(y, 0.0, 3.0).unwrap();
            assert!((trapezoid(up) - best).abs() < 1e-9, "y={y} up={up}");
            assert!((trapezoid(down) - best).abs() < 1e-9, "y={y} down={down}");
            assert!(up <= down);
        }
    }

    #[test]
    fn inverse_linear_interpolates() {
        let c = three().with_lookup(Lookup::Linear);
        assert!((c.inverse(75.0, 0.0, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((c.inverse(25.0, 0.2, 1.7).unwrap() - 1.5).abs() < 1e-12);
        assert!((c.inverse_upper(25.0, 0.2, 1.7).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(c.inverse(10.0, 0.2, 1.7).unwrap(), 1.7);
        assert_eq!(c.inverse_upper(95.0, 0.2, 1.7).unwrap(), 0.2);
    }

    #[test]
    fn from_function_examples() {
        let zero = ValueCurve::from_function(2.0, 0.5, |_| 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert_eq!(zero.len(), 5);

        let step = ValueCurve::step_target(0.2, 11, 0.9, 100.0).unwrap();
        assert_eq!(step.values()[..9], [100.0; 9]);
        assert_eq!(step.values()[10], 0.0);

        let clipped = ValueCurve::from_function(1.0, 0.25, |e| e).unwrap();
        assert!(clipped.values().iter().all(|&v| v == 0.0));

        assert!(ValueCurve::from_function(1.0, 0.3, |_| 0.0).is_err());
    }

    #[test]
    fn monotone_repair() {
        let noisy = ValueCurve::new(1.0, vec![10.0, 5.0, 5.0 + 1e-9, 1.0]).unwrap();
        assert_eq!(noisy.values(), &[10.0, 5.0, 5.0, 1.0]);
        assert!(matches!(
            ValueCurve::new(1.0, vec![10.0, 5.0, 6.0, 1.0]),
            Err(Error::NotMonotone { index: 2, .. })
        ));
    }

    #[test]
    fn integral_nearest_and_linear() {
        let c = three();
        // cells: [0,0.5)→100, [0.5,1.5)→50, [1.5,2]→0
        assert!((c.integral(0.25) - 25.0).abs() < 1e-12);
        assert!((c.integral(1.0) - 75.0).abs() < 1e-12);
        assert!((c.integral(2.0) - 100.0).abs() < 1e-12);
        let l = three().with_lookup(Lookup::Linear);
        assert!((l.integral(1.0) - 75.0).abs() < 1e-12);
        assert!((l.integral(2.0) - 100.0).abs() < 1e-12);
        assert!((l.integral(0.5) - 43.75).abs() < 1e-12);
    }

    fn decreasing_curve() -> impl Strategy<Value = ValueCurve> {
        prop::collection::vec(0.0f64..20.0, 2..40).prop_map(|drops| {
            let mut v = 150.0;
            let values = drops
                .iter()
                .map(|d| {
                    v -= d;
                    v
                })
                .collect();
            ValueCurve::new(3.0, values).unwrap()
        })
    }

    proptest! {
        #[test]
        fn eval_non_increasing(c in decreasing_curve(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.eval(lo).unwrap() >= c.eval(hi).unwrap());
            let l = c.clone().with_lookup(Lookup::Linear);
            prop_assert!(l.eval(lo).unwrap() >= l.eval(hi).unwrap() - 1e-12);
        }

        #[test]
        fn inverse_of_eval_on_strict_curve(drops in prop::collection::vec(0.5f64..20.0, 2..40), pick in 0usize..1000) {
            let mut v = 100.0;
            let values: Vec<f64> = drops.iter().map(|d| { v -= d; v }).collect();
            let c = ValueCurve::new(2.0, values).unwrap();
            let j = pick % c.len();
            let e = c.grid_point(j);
            prop_assert_eq!(c.inverse(c.eval(e).unwrap(), 0.0, 2.0).unwrap(), e);
            prop_assert_eq!(c.inverse_upper(c.eval(e).unwrap(), 0.0, 2.0).unwrap(), e);
        }

        #[test]
        fn from_function_idempotent(c in decreasing_curve()) {
            let again = ValueCurve::sample(c.capacity(), c.len(), |e| c.value_at(e)).unwrap();
            prop_assert_eq!(again.values(), c.values());
        }

        #[test]
        fn inverse_result_in_bounds(c in decreasing_curve(), y in -50.0f64..200.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for mode in [Lookup::Nearest, Lookup::Linear] {
                let c = c.clone().with_lookup(mode);
                let e = c.inverse(y, lo, hi).unwrap();
                prop_assert!(lo <= e && e <= hi);
                let u = c.inverse_upper(y, lo, hi).unwrap();
                prop_assert!(lo <= u && u <= hi);
            }
        }
    }
}
