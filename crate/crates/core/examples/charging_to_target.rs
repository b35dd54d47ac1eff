//! A device that must reach 90% SoC by the end of the day, starting at
//! 10%. The step terminal curve pays 100 $/MWh for energy below the target
//! and nothing above it, so the policy buys in the cheapest hours it
//! expects and stops once the target is met.

use storage_valuation::{
    backward_pass, policy::sample_path, simulate_path, PriceDistribution, StorageSpec,
    ValuationHorizon, ValueCurve,
};

fn main() -> storage_valuation::Result<()> {
    let spec = StorageSpec::new(0.1, 0.2, 0.9, 2.0)?;
    let grid = 201;
    let terminal = ValueCurve::step_target(0.2, grid, 0.9, 100.0)?;
    let stages = (0..24)
        .map(|h| {
            let da = 40.0 + 15.0 * ((h as f64 - 6.0) * std::f64::consts::PI / 12.0).sin();
            PriceDistribution::normal(da, 12.0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let h = ValuationHorizon::new(spec, stages, terminal.clone())?;
    let r = backward_pass(&h)?;

    let prices = sample_path(&h.stages, 5, 0);
    let e0 = 0.1 * spec.capacity();
    let out = simulate_path(e0, &prices, &r, &spec)?;
    println!("hour  price   charge  discharge  soc");
    for (t, (d, p)) in out.trace.iter().zip(&prices).enumerate() {
        println!("{t:4} {p:7.2} {:8.4} {:10.4} {:6.4}", d.charge, d.discharge, d.soc);
    }
    println!(
        "profit {:.3}, final SoC {:.1}%, terminal value {:.3}",
        out.profit,
        100.0 * out.final_soc / spec.capacity(),
        out.terminal_value(&terminal)
    );
    Ok(())
}
