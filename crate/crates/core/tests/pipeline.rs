//! Library pipeline from a price history file to policy evaluation.

use std::fs;

use chrono::DateTime;
use storage_valuation::forecast_io::{
    build_forecast, load_prices, realized_prices, synthetic_records, write_prices, ForecastMode, HorizonConfig,
};
use storage_valuation::validation::perfect_information;
use storage_valuation::{backward_pass, monte_carlo, simulate_path, PriceDistribution};

const CONFIG: &str = r#"
power_mwh = 0.5
capacity_mwh = 2.0
efficiency = 0.9
discharge_cost = 1.0
horizon = 24
grid_points = 201
mode = "empirical-residual"
training_days = 20
terminal = "constant"
terminal_value = 40.0
seed = 9
"#;

fn profile() -> Vec<f64> {
    (0..24)
        .map(|h| 40.0 + 18.0 * (std::f64::consts::TAU * (h as f64 - 9.0) / 24.0).sin())
        .collect()
}

#[test]
fn history_file_to_policy_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    let start = DateTime::parse_from_rfc3339("2025-06-01T00:00:00+02:00").unwrap();
    let residual = PriceDistribution::empirical(vec![(-12.0, 0.25), (0.0, 0.5), (12.0, 0.25)]).unwrap();
    let records = synthetic_records(start, &profile(), 21 * 24, &residual, 4);
    write_prices(&records, fs::File::create(&path).unwrap()).unwrap();

    let loaded = load_prices(&path).unwrap();
    assert_eq!(loaded, records);

    let config = HorizonConfig::from_toml(CONFIG).unwrap();
    let horizon = build_forecast(&loaded, &config).unwrap();
    assert_eq!(horizon.len(), 24);
    // every stage is the day-ahead price shifted by residuals drawn from
    // the three-point law
    for d in &horizon.stages {
        let support = d.support().unwrap();
        assert!(support.len() <= 3);
    }

    let result = backward_pass(&horizon).unwrap();
    let e0 = config.initial_soc();
    let mc = monte_carlo(e0, &horizon, &result, 2000, config.seed).unwrap();
    let held = 40.0 * e0;
    assert!(mc.total.mean > held, "{} vs {held}", mc.total.mean);

    let prices = realized_prices(&loaded, &config).unwrap();
    let replay = simulate_path(e0, &prices, &result, &horizon.spec).unwrap();
    let total = replay.profit + replay.terminal_value(&horizon.terminal);
    let best = perfect_information(&horizon.spec, &horizon.terminal, &prices, e0).unwrap();
    assert!(total <= best + 1e-9, "{total} vs {best}");
}

#[test]
fn point_forecast_ignores_residual_history() {
    let start = DateTime::parse_from_rfc3339("2025-06-01T00:00:00+00:00").unwrap();
    let residual = PriceDistribution::normal(0.0, 10.0).unwrap();
    let a = synthetic_records(start, &profile(), 21 * 24, &residual, 1);
    let b = synthetic_records(start, &profile(), 21 * 24, &residual, 2);
    let mut config = HorizonConfig::from_toml(CONFIG).unwrap();
    config.mode = ForecastMode::PointDa;
    let ha = build_forecast(&a, &config).unwrap();
    let hb = build_forecast(&b, &config).unwrap();
    assert_eq!(ha, hb);
    assert!(ha.stages.iter().all(|d| d.std_dev() == 0.0));
}
