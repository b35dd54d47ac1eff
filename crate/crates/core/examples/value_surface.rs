//! Marginal-value curves of a 4-hour device over one day of normal price
//! forecasts, for three forecast spreads. Wider forecasts make stored
//! energy more valuable at low SoC and less valuable at high SoC.

use storage_valuation::{backward_pass, PriceDistribution, StorageSpec, ValuationHorizon, ValueCurve};

const DA: [f64; 24] = [
    28.0, 25.0, 23.0, 22.0, 23.0, 27.0, 35.0, 44.0, 48.0, 46.0, 42.0, 40.0, 39.0, 38.0, 40.0, 45.0,
    55.0, 68.0, 72.0, 63.0, 52.0, 43.0, 36.0, 31.0,
];

fn main() -> storage_valuation::Result<()> {
    let spec = StorageSpec::new(0.25, 1.0, 0.9, 2.0)?;
    let terminal = ValueCurve::constant(1.0, 1001, 30.0)?;

    println!("sigma  v(0)@12h  v(E)@12h  range");
    for sigma in [10.0, 30.0, 50.0] {
        let stages = DA
            .iter()
            .map(|&m| PriceDistribution::normal(m, sigma))
            .collect::<Result<Vec<_>, _>>()?;
        let h = ValuationHorizon::new(spec, stages, terminal.clone())?;
        let r = backward_pass(&h)?;
        let mid = &r.curves[12];
        let last = mid.values().len() - 1;
        println!(
            "{sigma:5.0}  {:9.2} {:9.2} {:6.2}",
            mid.values()[0],
            mid.values()[last],
            mid.range()
        );
    }
    Ok(())
}
