//! Price ingestion and forecast construction.
//!
//! Prices come from a CSV file with header `timestamp,da,rt` (RFC-3339
//! timestamps, hourly rows, `rt` may be blank). A [`HorizonConfig`] read
//! from TOML says how to turn day-ahead prices and historical real-time
//! residuals `rt − da` into one price distribution per stage.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, FixedOffset, TimeDelta, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::PriceDistribution;
use crate::error::{Error, Result};
use crate::recursion::ValuationHorizon;
use crate::storage::StorageSpec;
use crate::value_curve::{Lookup, ValueCurve};

pub const HEADER: [&str; 3] = ["timestamp", "da", "rt"];

/// Minimum residual count per hour-of-day group (one week of data).
pub const MIN_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub da: f64,
    pub rt: Option<f64>,
}

impl PriceRecord {
    pub fn residual(&self) -> Option<f64> {
        self.rt.map(|rt| rt - self.da)
    }
}

pub fn load_prices(path: &Path) -> Result<Vec<PriceRecord>> {
    let file = std::fs::File::open(path)?;
    parse_prices(file, path)
}

/// Parses the price CSV; `source` only labels error messages.
pub fn parse_prices<R: Read>(reader: R, source: &Path) -> Result<Vec<PriceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Data(format!(
            "{}: expected header `{}`, found `{}`",
            source.display(),
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let row_error = |line: u64, message: String| Error::Row {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut out: Vec<PriceRecord> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(row_error(line, format!("expected 3 fields, found {}", row.len())));
        }
        let timestamp = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| row_error(line, format!("timestamp `{}`: {e}", &row[0])))?;
        let price = |s: &str, name: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(row_error(line, format!("{name} price `{s}` is not a finite number"))),
            }
        };
        let da = price(&row[1], "da")?;
        let rt = if row[2].is_empty() {
            None
        } else {
            Some(price(&row[2], "rt")?)
        };
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(row_error(line, format!("timestamp {timestamp} does not increase")));
            }
        }
        out.push(PriceRecord { timestamp, da, rt });
    }
    Ok(out)
}

/// Writes records in the input format.
pub fn write_prices<W: std::io::Write>(records: &[PriceRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.timestamp.to_rfc3339(),
            r.da.to_string(),
            r.rt.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hourly records starting at `start`: day-ahead from the repeating daily
/// `profile`, real-time as day-ahead plus an independent draw of
/// `residual`.
pub fn synthetic_records(
    start: DateTime<FixedOffset>,
    profile: &[f64],
    hours: usize,
    residual: &PriceDistribution,
    seed: u64,
) -> Vec<PriceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..hours)
        .map(|k| {
            let da = profile[k % profile.len()];
            PriceRecord {
                timestamp: start + TimeDelta::hours(k as i64),
                da,
                rt: Some(da + residual.sample(&mut rng)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastMode {
    /// Point mass at the day-ahead price.
    PointDa,
    /// Normal around the day-ahead price with the residual spread.
    NormalResidual,
    /// Day-ahead price plus the empirical residual distribution.
    EmpiricalResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    #[default]
    HourOfDay,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Constant,
    Step,
    Table,
}

fn default_grid_points() -> usize {
    1001
}

fn default_training_days() -> usize {
    31
}

fn default_terminal() -> TerminalKind {
    TerminalKind::Constant
}

fn default_initial_soc() -> f64 {
    0.5
}

fn default_paths() -> usize {
    1000
}

fn default_support_points() -> usize {
    5
}

/// Flat run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub power_mwh: f64,
    pub capacity_mwh: f64,
    pub efficiency: f64,
    #[serde(default)]
    pub discharge_cost: f64,
    /// Number of stages `T`.
    pub horizon: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub lookup: Lookup,
    pub mode: ForecastMode,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "default_training_days")]
    pub training_days: usize,
    /// Fixed σ for every stage in `normal-residual` mode; no training data
    /// is needed when set.
    #[serde(default)]
    pub sigma_override: Option<f64>,
    /// σ values for the value-surface sweep.
    #[serde(default)]
    pub sigma_sweep: Vec<f64>,
    /// Day-ahead prices of the forecast stages; taken from the price file
    /// when absent.
    #[serde(default)]
    pub da_profile: Option<Vec<f64>>,
    /// First forecast hour. Without it the forecast covers the last
    /// `horizon` rows of the price file, or starts at hour 0 when
    /// `da_profile` is given.
    #[serde(default)]
    pub forecast_start: Option<DateTime<FixedOffset>>,
    /// Days of repeated last-day distributions appended after the horizon.
    #[serde(default)]
    pub extra_days: usize,
    #[serde(default = "default_terminal")]
    pub terminal: TerminalKind,
    #[serde(default)]
    pub terminal_value: f64,
    #[serde(default)]
    pub terminal_fraction: f64,
    /// Marginal values at evenly spaced SoC from 0 to capacity.
    #[serde(default)]
    pub terminal_table: Vec<f64>,
    #[serde(default = "default_initial_soc")]
    pub initial_soc_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Support points per stage when a continuous forecast is discretized
    /// for the brute-force reference.
    #[serde(default = "default_support_points")]
    pub oracle_support_points: usize,
}

impl HorizonConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.storage_spec().map_err(|e| Error::Config(e.to_string()))?;
        let fail = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.grid_points < 2 {
            return fail(format!("grid_points {} < 2", self.grid_points));
        }
        if !(0.0..=1.0).contains(&self.initial_soc_fraction) {
            return fail(format!("initial_soc_fraction {} outside [0, 1]", self.initial_soc_fraction));
        }
        match self.terminal {
            TerminalKind::Step if !(0.0..=1.0).contains(&self.terminal_fraction) => {
                return fail(format!("terminal_fraction {} outside [0, 1]", self.terminal_fraction));
            }
            TerminalKind::Table if self.terminal_table.len() < 2 => {
                return fail("terminal = \"table\" needs terminal_table with 2+ entries".into());
            }
            _ => {}
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("sigma_override {s} must be finite and non-negative"));
            }
        }
        if self.sigma_sweep.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return fail("sigma_sweep entries must be finite and non-negative".into());
        }
        if let Some(p) = &self.da_profile {
            if p.len() < self.horizon {
                return fail(format!("da_profile has {} entries for horizon {}", p.len(), self.horizon));
            }
        }
        if self.training_days == 0 {
            return fail("training_days must be at least 1".into());
        }
        Ok(())
    }

    pub fn storage_spec(&self) -> Result<StorageSpec> {
        StorageSpec::new(self.power_mwh, self.capacity_mwh, self.efficiency, self.discharge_cost)
    }

    pub fn initial_soc(&self) -> f64 {
        self.initial_soc_fraction * self.capacity_mwh
    }

    /// Whether [`build_forecast`] needs price records. A σ sweep counts as
    /// a fixed σ, since every swept horizon overrides it.
    pub fn needs_prices(&self) -> bool {
        let residual = match self.mode {
            ForecastMode::PointDa => false,
            ForecastMode::NormalResidual => self.sigma_override.is_none() && self.sigma_sweep.is_empty(),
            ForecastMode::EmpiricalResidual => true,
        };
        residual || self.da_profile.is_none()
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            mode: ForecastMode::NormalResidual,
            sigma_override: Some(sigma),
            ..self.clone()
        }
    }

    pub fn terminal_curve(&self) -> Result<ValueCurve> {
        let (cap, j) = (self.capacity_mwh, self.grid_points);
        let curve = match self.terminal {
            TerminalKind::Constant => ValueCurve::constant(cap, j, self.terminal_value)?,
            TerminalKind::Step => {
                ValueCurve::step_target(cap, j, self.terminal_fraction, self.terminal_value)?
            }
            TerminalKind::Table => {
                let table = &self.terminal_table;
                let last = (table.len() - 1) as f64;
                ValueCurve::sample(cap, j, |e| {
                    let x = (e / cap * last).clamp(0.0, last);
                    let k = (x.floor() as usize).min(table.len() - 2);
                    table[k] + (x - k as f64) * (table[k + 1] - table[k])
                })?
            }
        };
        Ok(curve.with_lookup(self.lookup))
    }
}

/// Day-ahead prices of the forecast stages, their hours of day, and the
/// instant before which records count as training data.
struct Window {
    da: Vec<f64>,
    hours: Vec<u32>,
    start: Option<usize>,
    cutoff: Option<DateTime<FixedOffset>>,
}

fn forecast_window(records: &[PriceRecord], config: &HorizonConfig) -> Result<Window> {
    let t = config.horizon;
    if let Some(profile) = &config.da_profile {
        let h0 = config.forecast_start.map_or(0, |s| s.hour());
        let cutoff = config
            .forecast_start
            .or_else(|| records.last().map(|r| r.timestamp + TimeDelta::hours(1)));
        return Ok(Window {
            da: profile[..t].to_vec(),
            hours: (0..t as u32).map(|k| (h0 + k) % 24).collect(),
            start: None,
            cutoff,
        });
    }
    let start = match config.forecast_start {
        Some(s) => records.partition_point(|r| r.timestamp < s),
        None => records.len().saturating_sub(t),
    };
    if start + t > records.len() {
        return Err(Error::Data(format!(
            "need {t} forecast rows from the start of the horizon, found {}",
            records.len() - start.min(records.len())
        )));
    }
    let rows = &records[start..start + t];
    Ok(Window {
        da: rows.iter().map(|r| r.da).collect(),
        hours: rows.iter().map(|r| r.timestamp.hour()).collect(),
        start: Some(start),
        cutoff: Some(rows[0].timestamp),
    })
}

/// Residuals `rt − da` in the training window, sorted within each group.
fn residual_groups(
    records: &[PriceRecord],
    cutoff: Option<DateTime<FixedOffset>>,
    config: &HorizonConfig,
) -> BTreeMap<u32, Vec<f64>> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let Some(cutoff) = cutoff else {
        return groups;
    };
    let from = cutoff - TimeDelta::days(config.training_days as i64);
    for r in records {
        if r.timestamp < from || r.timestamp >= cutoff {
            continue;
        }
        if let Some(res) = r.residual() {
            groups.entry(group_key(r.timestamp.hour(), config.grouping)).or_default().push(res);
        }
    }
    for g in groups.values_mut() {
        g.sort_by(f64::total_cmp);
    }
    groups
}

fn group_key(hour: u32, grouping: Grouping) -> u32 {
    match grouping {
        Grouping::HourOfDay => hour,
        Grouping::Pooled => 0,
    }
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Per-stage price distributions and the terminal curve described by
/// `config`.
pub fn build_forecast(records: &[PriceRecord], config: &HorizonConfig) -> Result<ValuationHorizon> {
    config.validate()?;
    let window = forecast_window(records, config)?;
    let residual_mode = match config.mode {
        ForecastMode::PointDa => false,
        ForecastMode::NormalResidual => config.sigma_override.is_none(),
        ForecastMode::EmpiricalResidual => true,
    };
    let groups = if residual_mode {
        residual_groups(records, window.cutoff, config)
    } else {
        BTreeMap::new()
    };
    let min_count = match config.grouping {
        Grouping::HourOfDay => MIN_DAYS,
        Grouping::Pooled => 24 * MIN_DAYS,
    };
    let residuals = |hour: u32| -> Result<&[f64]> {
        let key = group_key(hour, config.grouping);
        let g = groups.get(&key).map_or(&[][..], |g| g.as_slice());
        if g.len() < min_count {
            let label = match config.grouping {
                Grouping::HourOfDay => format!("hour {hour:02}"),
                Grouping::Pooled => "pooled residuals".into(),
            };
            return Err(Error::InsufficientData(format!(
                "{label}: {} residuals in the {}-day window, need {min_count}",
                g.len(),
                config.training_days
            )));
        }
        Ok(g)
    };

    let stages = window
        .da
        .iter()
        .zip(&window.hours)
        .enumerate()
        .map(|(t, (&da, &hour))| -> Result<PriceDistribution> {
            match config.mode {
                ForecastMode::PointDa => PriceDistribution::point_mass(da),
                ForecastMode::NormalResidual => {
                    let sigma = match config.sigma_override {
                        Some(s) => s,
                        None => sample_std(residuals(hour)?),
                    };
                    if sigma > 0.0 {
                        PriceDistribution::normal(da, sigma)
                    } else {
                        log::warn!("stage {}: residual spread is zero, using a point mass", t + 1);
                        PriceDistribution::point_mass(da)
                    }
                }
                ForecastMode::EmpiricalResidual => {
                    PriceDistribution::shifted(PriceDistribution::from_samples(residuals(hour)?)?, da)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let spec = config.storage_spec()?;
    let mut horizon = ValuationHorizon::new(spec, stages, config.terminal_curve()?)?;
    if config.extra_days > 0 {
        let period = horizon.len().min(24);
        horizon = horizon.with_repeated_tail(period, config.extra_days)?;
    }
    Ok(horizon)
}

/// Realized real-time prices of the forecast stages.
pub fn realized_prices(records: &[PriceRecord], config: &HorizonConfig) -> Result<Vec<f64>> {
    let window = forecast_window(records, config)?;
    let start = window.start.ok_or_else(|| {
        Error::Config("realized prices come from the price file; remove da_profile".into())
    })?;
    records[start..start + config.horizon]
        .iter()
        .map(|r| {
            r.rt.ok_or_else(|| Error::Data(format!("no rt price at {}", r.timestamp.to_rfc3339())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn src() -> PathBuf {
        PathBuf::from("prices.csv")
    }

    fn config(mode: &str) -> HorizonConfig {
        HorizonConfig::from_toml(&format!(
            r#"
            power_mwh = 1.0
            capacity_mwh = 4.0
            efficiency = 0.9
            horizon = 24
            grid_points = 41
            mode = "{mode}"
            training_days = 14
            "#
        ))
        .unwrap()
    }

    fn start() -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339("2018-01-01T00:00:00-05:00").unwrap()
    }

    fn records(days: usize, seed: u64) -> Vec<PriceRecord> {
        let profile: Vec<f64> = (0..24).map(|h| 30.0 + h as f64).collect();
        let residual = PriceDistribution::normal(0.0, 8.0).unwrap();
        synthetic_records(start(), &profile, days * 24, &residual, seed)
    }

    #[test]
    fn empty_data_section() {
        let r = parse_prices("timestamp,da,rt\n".as_bytes(), &src()).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn rows_with_blank_rt() {
        let text = "timestamp,da,rt\n2018-01-01T00:00:00Z,30.5,31\n2018-01-01T01:00:00Z,-2,\n";
        let r = parse_prices(text.as_bytes(), &src()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].rt, Some(31.0));
        assert_eq!(r[1].da, -2.0);
        assert_eq!(r[1].rt, None);
    }

    #[test]
    fn malformed_input_is_reported_with_line() {
        assert!(matches!(
            parse_prices("time,da,rt\n".as_bytes(), &src()),
            Err(Error::Data(_))
        ));
        let bad = "timestamp,da,rt\n2018-01-01T00:00:00Z,30,31\n2018-01-01T01:00:00Z,abc,1\n";
        match parse_prices(bad.as_bytes(), &src()) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let back = "timestamp,da,rt\n2018-01-01T01:00:00Z,30,31\n2018-01-01T00:00:00Z,30,1\n";
        assert!(matches!(parse_prices(back.as_bytes(), &src()), Err(Error::Row { line: 3, .. })));
        assert!(load_prices(Path::new("/nonexistent/prices.csv")).is_err());
    }

    #[test]
    fn write_then_parse_roundtrip() {
        let r = records(2, 1);
        let mut buf = Vec::new();
        write_prices(&r, &mut buf).unwrap();
        assert_eq!(parse_prices(buf.as_slice(), &src()).unwrap(), r);
    }

    #[test]
    fn config_validation() {
        let base = "power_mwh = 1.0\ncapacity_mwh = 4.0\nefficiency = 0.9\nhorizon = 24\n";
        assert!(HorizonConfig::from_toml(&format!("{base}mode = \"point-da\"\n")).is_ok());
        assert!(HorizonConfig::from_toml(&format!("{base}mode = \"guess\"\n")).is_err());
        assert!(HorizonConfig::from_toml(&format!(
            "{base}mode = \"point-da\"\nterminal = \"step\"\nterminal_fraction = 1.5\n"
        ))
        .is_err());
        assert!(HorizonConfig::from_toml(&format!("{base}mode = \"point-da\"\nbogus = 1\n")).is_err());
        assert!(HorizonConfig::from_toml("power_mwh = 1.0\n").is_err());
    }

    #[test]
    fn point_da_uses_last_rows() {
        let r = records(3, 2);
        let h = build_forecast(&r, &config("point-da")).unwrap();
        assert_eq!(h.len(), 24);
        for (d, rec) in h.stages.iter().zip(&r[48..]) {
            assert_eq!(d.support().unwrap(), vec![(rec.da, 1.0)]);
        }
    }

    #[test]
    fn identical_rt_degenerates_to_point_mass() {
        let mut r = records(15, 3);
        for x in &mut r {
            x.rt = Some(x.da);
        }
        let h = build_forecast(&r, &config("normal-residual")).unwrap();
        assert!(h.stages.iter().all(|d| !d.is_continuous() && d.std_dev() == 0.0));
    }

    #[test]
    fn normal_residual_uses_hourly_spread() {
        let r = records(15, 4);
        let c = config("normal-residual");
        let h = build_forecast(&r, &c).unwrap();
        let train = &r[..14 * 24];
        for (t, d) in h.stages.iter().enumerate() {
            let res: Vec<f64> = train.iter().skip(t).step_by(24).map(|x| x.residual().unwrap()).collect();
            let mean = res.iter().sum::<f64>() / res.len() as f64;
            let var = res.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (res.len() - 1) as f64;
            assert!((d.std_dev() - var.sqrt()).abs() < 1e-9);
            assert_eq!(d.mean(), r[14 * 24 + t].da);
        }
    }

    #[test]
    fn two_point_residuals_give_two_point_stages() {
        let mut r = records(15, 5);
        for (k, x) in r.iter_mut().enumerate() {
            x.rt = Some(x.da + if (k / 24) % 2 == 0 { -5.0 } else { 5.0 });
        }
        let mut c = config("empirical-residual");
        c.training_days = 14;
        let h = build_forecast(&r, &c).unwrap();
        for (d, rec) in h.stages.iter().zip(&r[14 * 24..]) {
            let s = d.support().unwrap();
            assert_eq!(s.len(), 2);
            assert!((s[0].0 - (rec.da - 5.0)).abs() < 1e-12);
            assert!((s[1].0 - (rec.da + 5.0)).abs() < 1e-12);
            assert!((s[0].1 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn day_permutation_leaves_fit_unchanged() {
        let r = records(15, 6);
        let mut permuted = r.clone();
        // reverse the order of the 14 training days, keeping timestamps
        for day in 0..14 {
            for h in 0..24 {
                let from = &r[(13 - day) * 24 + h];
                let to = &mut permuted[day * 24 + h];
                to.da = from.da;
                to.rt = from.rt;
            }
        }
        for mode in ["normal-residual", "empirical-residual"] {
            for grouping in [Grouping::HourOfDay, Grouping::Pooled] {
                let mut c = config(mode);
                c.grouping = grouping;
                c.training_days = 14;
                let a = build_forecast(&r, &c).unwrap();
                let b = build_forecast(&permuted, &c).unwrap();
                assert_eq!(a.stages, b.stages, "{mode} {grouping:?}");
            }
        }
    }

    #[test]
    fn short_window_is_rejected() {
        let r = records(5, 7);
        assert!(matches!(
            build_forecast(&r, &config("normal-residual")),
            Err(Error::InsufficientData(_))
        ));
        let mut c = config("normal-residual");
        c.sigma_override = Some(30.0);
        assert!(build_forecast(&r, &c).is_ok());
    }

    #[test]
    fn sigma_override_with_profile_needs_no_prices() {
        let mut c = config("point-da").with_sigma(30.0);
        c.da_profile = Some((0..24).map(|h| 20.0 + h as f64).collect());
        assert!(!c.needs_prices());
        let h = build_forecast(&[], &c).unwrap();
        assert!(h.stages.iter().all(|d| d.std_dev() == 30.0));
        assert_eq!(h.stages[3].mean(), 23.0);
        let mut longer = c.clone();
        longer.extra_days = 2;
        assert_eq!(build_forecast(&[], &longer).unwrap().len(), 72);
    }

    #[test]
    fn terminal_kinds() {
        let mut c = config("point-da");
        c.terminal = TerminalKind::Step;
        c.terminal_fraction = 0.9;
        c.terminal_value = 100.0;
        let v = c.terminal_curve().unwrap();
        assert_eq!(v.eval(3.5).unwrap(), 100.0);
        assert_eq!(v.eval(3.8).unwrap(), 0.0);
        c.terminal = TerminalKind::Table;
        c.terminal_table = vec![80.0, 40.0, 0.0];
        let v = c.terminal_curve().unwrap();
        assert!((v.eval(1.0).unwrap() - 60.0).abs() < 1e-9);
        assert!((v.eval(4.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn realized_prices_follow_forecast_window() {
        let r = records(3, 8);
        let mut c = config("point-da");
        c.forecast_start = Some(r[24].timestamp);
        let rt = realized_prices(&r, &c).unwrap();
        assert_eq!(rt[0], r[24].rt.unwrap());
        assert_eq!(rt.len(), 24);
        c.forecast_start = Some(r[60].timestamp);
        assert!(realized_prices(&r, &c).is_err());
    }

    #[test]
    fn horizon_json_roundtrip_is_bit_exact() {
        let r = records(15, 9);
        let h = build_forecast(&r, &config("empirical-residual")).unwrap();
        let back = ValuationHorizon::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back, h);
        let h = build_forecast(&r, &config("normal-residual")).unwrap();
        assert_eq!(ValuationHorizon::from_json(&h.to_json().unwrap()).unwrap(), h);
    }
}
