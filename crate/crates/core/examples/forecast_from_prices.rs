//! Builds a forecast horizon from a day-ahead/real-time price history:
//! synthetic history is written to CSV, read back, and turned into
//! per-hour empirical residual laws around tomorrow's day-ahead prices.

use chrono::DateTime;
use storage_valuation::{
    backward_pass,
    forecast_io::{build_forecast, parse_prices, synthetic_records, write_prices, HorizonConfig},
    PriceDistribution,
};

const CONFIG: &str = r#"
power_mwh = 0.25
capacity_mwh = 1.0
efficiency = 0.9
discharge_cost = 2.0
horizon = 24
grid_points = 201
mode = "empirical-residual"
training_days = 14
terminal = "constant"
terminal_value = 30.0
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile: Vec<f64> = (0..24).map(|h| 30.0 + 20.0 * (std::f64::consts::TAU * h as f64 / 24.0).sin().max(0.0)).collect();
    let start = DateTime::parse_from_rfc3339("2025-03-01T00:00:00+00:00")?;
    let residual = PriceDistribution::normal(0.0, 8.0)?;
    let history = synthetic_records(start, &profile, 15 * 24, &residual, 3);

    let mut csv = Vec::new();
    write_prices(&history, &mut csv)?;
    println!("{}", String::from_utf8_lossy(&csv).lines().take(3).collect::<Vec<_>>().join("\n"));
    let records = parse_prices(csv.as_slice(), "memory.csv".as_ref())?;

    let config = HorizonConfig::from_toml(CONFIG)?;
    let horizon = build_forecast(&records, &config)?;
    for (t, d) in horizon.stages.iter().enumerate().step_by(6) {
        println!("hour {t:2}: mean {:.2}, sd {:.2}", d.mean(), d.std_dev());
    }
    let r = backward_pass(&horizon)?;
    println!("value of a full device at hour 0: {:.2} $", r.curves[0].integral(1.0));
    Ok(())
}
