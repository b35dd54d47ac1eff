//! Command-line front end: value surfaces, path replay, Monte Carlo,
//! reference cross-checks and timing.
//!
//! Every command writes its result files plus one `manifest.json` into the
//! output directory. Result files depend only on the configuration, the
//! price file and the seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::distributions::PriceDistribution;
use crate::error::{Error, Result};
use crate::forecast_io::{build_forecast, load_prices, realized_prices, HorizonConfig, PriceRecord};
use crate::oracle::{sdp_solve, DiscreteInstance, GridFunction};
use crate::policy::{marginal_check, monte_carlo, simulate_path, McSummary, MarginalCheck};
use crate::recursion::{backward_pass, ValuationHorizon, ValuationResult};
use crate::storage::StorageSpec;
use crate::validation::{compare_with_oracle, law_check, LawCheck, OracleComparison};
use crate::value_curve::{Lookup, ValueCurve};

/// Maximum KS distance accepted by the law check, or the 1% critical value
/// `1.63/√n` when that is larger.
pub const KS_TOLERANCE: f64 = 0.01;

/// Bounds on the `T → 2T` timing ratio.
pub const SCALING_RANGE: (f64, f64) = (1.5, 3.0);

#[derive(Debug, Parser)]
#[command(name = "storval", version, about = "Energy storage valuation under price uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Price CSV with header `timestamp,da,rt`.
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo paths (mc) or law-check samples (oracle).
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Overrides the configured SoC grid size.
    #[arg(long = "grid-points", global = true)]
    pub grid_points: Option<u32>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Value curves for every stage.
    Value,
    /// Replay the policy on the realized prices.
    Simulate,
    /// Monte Carlo evaluation of the policy.
    Mc,
    /// Compare against brute-force dynamic programming.
    Oracle,
    /// Time the backward pass.
    Bench {
        /// Number of stages.
        #[arg(long, default_value_t = 24)]
        horizon: usize,
        /// Timed repetitions per horizon.
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Value => "value",
            Command::Simulate => "simulate",
            Command::Mc => "mc",
            Command::Oracle => "oracle",
            Command::Bench { .. } => "bench",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the effective configuration as JSON.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// Wall time per backward step in seconds, stage 1 first.
    pub stage_seconds: Vec<f64>,
    pub outputs: Vec<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_)
        | Error::InvalidStorage(_)
        | Error::InvalidCurve(_)
        | Error::InvalidHorizon(_)
        | Error::InvalidDistribution(_) => 2,
        Error::Data(_) | Error::Row { .. } | Error::InsufficientData(_) | Error::Csv(_) => 3,
        Error::GuardExceeded { .. } => 4,
        Error::Tolerance(_) => 5,
        _ => 1,
    }
}

/// Output files and timings collected while a command runs.
struct Run {
    out: PathBuf,
    outputs: Vec<PathBuf>,
    stage_seconds: Vec<f64>,
}

impl Run {
    fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            outputs: Vec::new(),
            stage_seconds: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<fs::File> {
        let path = self.out.join(name);
        let file = fs::File::create(&path)?;
        self.outputs.push(path);
        Ok(file)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        Ok(())
    }

    fn record_times(&mut self, r: &ValuationResult) {
        let t = r.horizon();
        self.stage_seconds.extend(r.stage_times[..t].iter().map(Duration::as_secs_f64));
    }

    fn finish(mut self, command: &str, config_hash: String, seed: u64) -> Result<RunManifest> {
        let path = self.out.join("manifest.json");
        self.outputs.push(path.clone());
        let manifest = RunManifest {
            command: command.into(),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            stage_seconds: self.stage_seconds,
            outputs: self.outputs,
        };
        let mut f = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        Ok(manifest)
    }
}

/// Parsed inputs shared by the configuration-driven commands.
pub struct Inputs {
    pub config: HorizonConfig,
    pub records: Vec<PriceRecord>,
}

impl Inputs {
    pub fn load(common: &Common) -> Result<Self> {
        let path = common
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config is required".into()))?;
        let mut config = HorizonConfig::load(path)?;
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(j) = common.grid_points {
            config.grid_points = j as usize;
        }
        if let Some(n) = common.n {
            config.paths = n as usize;
        }
        config.validate()?;
        let records = match &common.prices {
            Some(p) => load_prices(p).map_err(|e| match e {
                Error::Io(io) => Error::Data(format!("{}: {io}", p.display())),
                other => other,
            })?,
            None if config.needs_prices() => {
                return Err(Error::Config("this configuration needs --prices".into()));
            }
            None => Vec::new(),
        };
        Ok(Self { config, records })
    }

    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(&self.config)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

pub fn run(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Bench { horizon, reps } => {
            let j = cli.common.grid_points.map_or(1001, |j| j as usize);
            run_bench(*horizon, j, *reps, &cli.common.out)
        }
        cmd => {
            let inputs = Inputs::load(&cli.common)?;
            let n = cli.common.n.map(|n| n as usize);
            match cmd {
                Command::Value => run_value(&inputs, &cli.common.out),
                Command::Simulate => run_simulate(&inputs, &cli.common.out),
                Command::Mc => run_mc(&inputs, &cli.common.out),
                Command::Oracle => run_oracle(&inputs, n.unwrap_or(100_000), &cli.common.out),
                Command::Bench { .. } => unreachable!(),
            }
        }
    }
}

fn write_surface<W: Write>(result: &ValuationResult, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["stage", "soc_mwh", "value_per_mwh"])?;
    for (t, curve) in result.curves.iter().enumerate() {
        for (e, v) in curve.grid().zip(curve.values()) {
            csv.write_record([t.to_string(), e.to_string(), v.to_string()])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceSummary {
    pub file: String,
    pub sigma: Option<f64>,
    pub stages: usize,
    pub grid_points: usize,
    /// `v(0) − v(E)` at stage `T/2`.
    pub mid_horizon_range: f64,
    /// `v_0` at the initial SoC.
    pub initial_value: f64,
}

fn summarize_surface(file: String, sigma: Option<f64>, result: &ValuationResult, e0: f64) -> Result<SurfaceSummary> {
    let t = result.horizon();
    Ok(SurfaceSummary {
        file,
        sigma,
        stages: t,
        grid_points: result.curves[0].len(),
        mid_horizon_range: result.curves[t / 2].range(),
        initial_value: result.curves[0].eval(e0)?,
    })
}

/// `value`: one surface, or one per σ when `sigma_sweep` is set.
pub fn run_value(inputs: &Inputs, out: &Path) -> Result<RunManifest> {
    let config = &inputs.config;
    let mut run = Run::new(out)?;
    let variants: Vec<(Option<f64>, HorizonConfig)> = if config.sigma_sweep.is_empty() {
        vec![(None, config.clone())]
    } else {
        config.sigma_sweep.iter().map(|&s| (Some(s), config.with_sigma(s))).collect()
    };
    let mut summaries = Vec::new();
    for (sigma, cfg) in variants {
        let horizon = build_forecast(&inputs.records, &cfg)?;
        let result = backward_pass(&horizon)?;
        run.record_times(&result);
        let file = match sigma {
            Some(s) => format!("value_sigma_{s}.csv"),
            None => "value.csv".to_string(),
        };
        write_surface(&result, run.create(&file)?)?;
        summaries.push(summarize_surface(file, sigma, &result, cfg.initial_soc())?);
    }
    run.json("value_summary.json", &summaries)?;
    run.finish("value", inputs.config_hash()?, config.seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub initial_soc: f64,
    pub final_soc: f64,
    pub profit: f64,
    /// Value of the final SoC under the curve at the end of the replayed
    /// prices.
    pub residual_value: f64,
}

/// Curves `0..=t` of `result`, for replaying fewer stages than were valued.
fn truncated(result: &ValuationResult, t: usize) -> ValuationResult {
    ValuationResult {
        curves: result.curves[..=t].to_vec(),
        stage_times: result.stage_times[..=t].to_vec(),
    }
}

/// `simulate`: replays the policy on the realized prices.
pub fn run_simulate(inputs: &Inputs, out: &Path) -> Result<RunManifest> {
    let config = &inputs.config;
    let prices = realized_prices(&inputs.records, config)?;
    let horizon = build_forecast(&inputs.records, config)?;
    let full = backward_pass(&horizon)?;
    let mut run = Run::new(out)?;
    run.record_times(&full);
    let result = truncated(&full, prices.len());
    let e0 = config.initial_soc();
    let outcome = simulate_path(e0, &prices, &result, &horizon.spec)?;

    let mut csv = csv::Writer::from_writer(run.create("trace.csv")?);
    csv.write_record([
        "stage",
        "price",
        "p_charge",
        "p_discharge",
        "soc",
        "period_profit",
        "cumulative_profit",
    ])?;
    let mut cumulative = 0.0;
    for (t, (d, price)) in outcome.trace.iter().zip(&prices).enumerate() {
        cumulative += d.profit;
        csv.write_record([
            (t + 1).to_string(),
            price.to_string(),
            d.charge.to_string(),
            d.discharge.to_string(),
            d.soc.to_string(),
            d.profit.to_string(),
            cumulative.to_string(),
        ])?;
    }
    csv.flush()?;
    drop(csv);

    let summary = SimulationSummary {
        initial_soc: e0,
        final_soc: outcome.final_soc,
        profit: outcome.profit,
        residual_value: result.curves[prices.len()].integral(outcome.final_soc),
    };
    run.json("simulate.json", &summary)?;
    run.finish("simulate", inputs.config_hash()?, config.seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    #[serde(flatten)]
    pub summary: McSummary,
    pub marginal_check: MarginalCheck,
    pub marginal_check_within_3se: bool,
}

/// `mc`: Monte Carlo estimate of the policy's expected profit from the
/// initial SoC, with the finite-difference check of `v_0` there.
pub fn run_mc(inputs: &Inputs, out: &Path) -> Result<RunManifest> {
    let config = &inputs.config;
    let horizon = build_forecast(&inputs.records, config)?;
    let result = backward_pass(&horizon)?;
    let mut run = Run::new(out)?;
    run.record_times(&result);
    let e0 = config.initial_soc();
    let summary = monte_carlo(e0, &horizon, &result, config.paths, config.seed)?;
    let check = marginal_check(e0, 2.0 * horizon.terminal.step(), &horizon, &result, config.paths, config.seed)?;
    run.json(
        "mc.json",
        &McReport {
            summary,
            marginal_check: check,
            marginal_check_within_3se: check.within(3.0),
        },
    )?;
    run.finish("mc", inputs.config_hash()?, config.seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub support_points: usize,
    pub size: u64,
    pub comparison: OracleComparison,
    /// Absent in linear lookup mode, whose curves are not step functions.
    pub law_check: Option<LawCheck>,
    pub ks_tolerance: f64,
    pub oracle_value: f64,
    pub mc_total: crate::policy::Estimate,
    pub mc_within_3se: bool,
    pub passed: bool,
}

/// Replaces continuous stages by `k`-point discretizations.
pub fn discretized(h: &ValuationHorizon, k: usize) -> Result<ValuationHorizon> {
    let stages = h
        .stages
        .iter()
        .map(|d| if d.support().is_some() { Ok(d.clone()) } else { d.discretize(k) })
        .collect::<Result<Vec<PriceDistribution>>>()?;
    ValuationHorizon::new(h.spec, stages, h.terminal.clone())
}

/// `oracle`: analytical curves against brute-force dynamic programming on
/// the discretized configuration.
pub fn run_oracle(inputs: &Inputs, law_samples: usize, out: &Path) -> Result<RunManifest> {
    let config = &inputs.config;
    let horizon = discretized(&build_forecast(&inputs.records, config)?, config.oracle_support_points)?;
    let inst = DiscreteInstance::from_distributions(horizon.spec, &horizon.stages, horizon.terminal.values())?;
    inst.check_guard()?;
    let result = backward_pass(&horizon)?;
    let mut run = Run::new(out)?;
    run.record_times(&result);
    let sdp = sdp_solve(&inst)?;
    let comparison = compare_with_oracle(&result, &sdp, &horizon.spec);

    let spec = horizon.spec;
    let step = horizon.terminal.step();
    let cap = spec.capacity();
    let delta = step * 1e-2;
    let law = match horizon.terminal.lookup() {
        Lookup::Nearest => {
            let e = config.initial_soc().clamp(delta, cap - delta);
            Some(law_check(e, delta, &horizon.stages[0], &result.curves[1], &spec, law_samples, config.seed)?)
        }
        Lookup::Linear => None,
    };
    let ks_tolerance = KS_TOLERANCE.max(1.63 / (law_samples as f64).sqrt());

    // the reference value is tabulated on the grid
    let e0 = (config.initial_soc() / step).round() * step;
    let oracle_value = GridFunction::new(cap, sdp.values[0].clone())?.at(e0);
    let mc = monte_carlo(e0, &horizon, &result, config.paths, config.seed)?;
    let mc_within_3se = (mc.total.mean - oracle_value).abs() <= 3.0 * mc.total.std_error + 1e-9 * oracle_value.abs();

    let passed = comparison.passed && law.as_ref().is_none_or(|l| l.ks < ks_tolerance) && mc_within_3se;
    let report = OracleReport {
        support_points: config.oracle_support_points,
        size: inst.size(),
        comparison,
        law_check: law,
        ks_tolerance,
        oracle_value,
        mc_total: mc.total,
        mc_within_3se,
        passed,
    };
    run.json("oracle.json", &report)?;
    let manifest = run.finish("oracle", inputs.config_hash()?, config.seed)?;
    if !passed {
        return Err(Error::Tolerance(format!(
            "reference comparison failed (worst deviation ratio {:.3}, see {})",
            report.comparison.worst_ratio,
            out.join("oracle.json").display()
        )));
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stages: usize,
    pub median_ms: f64,
    pub min_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub grid_points: usize,
    pub reps: usize,
    pub single_stage: Timing,
    pub base: Timing,
    pub doubled: Timing,
    /// Median time at `2T` over median time at `T`.
    pub scaling: f64,
    pub scaling_ok: bool,
}

/// A 4-hour device facing normal prices around a daily profile, for
/// timing.
pub fn bench_horizon(stages: usize, grid_points: usize) -> Result<ValuationHorizon> {
    let spec = StorageSpec::new(1.0, 4.0, 0.9, 5.0)?;
    let dists = (0..stages)
        .map(|t| {
            let hour = (t % 24) as f64;
            let da = 40.0 + 15.0 * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin();
            PriceDistribution::normal(da, 30.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let terminal = ValueCurve::sample(4.0, grid_points, |e| 45.0 - 5.0 * e)?;
    ValuationHorizon::new(spec, dists, terminal)
}

/// Median and minimum wall time of `backward_pass` over `reps` runs.
pub fn time_backward_pass(h: &ValuationHorizon, reps: usize) -> Result<Timing> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let started = Instant::now();
        std::hint::black_box(backward_pass(h)?);
        times.push(started.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    };
    Ok(Timing {
        stages: h.len(),
        median_ms: median,
        min_ms: times[0],
    })
}

/// `bench`: times `T` and `2T` stages and checks the ratio.
pub fn run_bench(stages: usize, grid_points: usize, reps: usize, out: &Path) -> Result<RunManifest> {
    if stages == 0 || grid_points < 2 || reps == 0 {
        return Err(Error::Config("bench needs positive horizon, reps and 2+ grid points".into()));
    }
    let mut run = Run::new(out)?;
    let single_stage = time_backward_pass(&bench_horizon(1, grid_points)?, reps)?;
    let base = time_backward_pass(&bench_horizon(stages, grid_points)?, reps)?;
    let doubled = time_backward_pass(&bench_horizon(2 * stages, grid_points)?, reps)?;
    let scaling = doubled.median_ms / base.median_ms;
    let scaling_ok = (SCALING_RANGE.0..=SCALING_RANGE.1).contains(&scaling);
    let report = BenchReport {
        grid_points,
        reps,
        single_stage,
        base,
        doubled,
        scaling,
        scaling_ok,
    };
    run.json("bench.json", &report)?;
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(&(stages, grid_points, reps))?));
    let manifest = run.finish("bench", hash, 0)?;
    if !scaling_ok {
        return Err(Error::Tolerance(format!(
            "doubling the horizon scaled time by {scaling:.2}, outside [{}, {}]",
            SCALING_RANGE.0, SCALING_RANGE.1
        )));
    }
    Ok(manifest)
}
